#pragma once

// Command-line front end: `diane serve|identify|enroll|train|stream pub|stream watch`.
//
// Exit codes
//   identify      0 known, 2 unknown face, 3 no face detected, 4 other service fault, 1 transport or usage
//   enroll/train  0 ok, 2 service fault, 1 transport or usage
//   stream pub    0 ok, 2 session refused, 1 transport or usage
//   stream watch  0 feed ended, 2 no such session, 1 transport or usage
//   serve         0 after SIGINT/SIGTERM, 1 startup failure

#include "diane/records.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace diane::cli {

namespace exit_code {
inline constexpr int Ok = 0;
inline constexpr int Transport = 1;
inline constexpr int Usage = 1;
inline constexpr int Fault = 2;
inline constexpr int UnknownFace = 2;
inline constexpr int NoFace = 3;
inline constexpr int OtherFault = 4;
}  // namespace exit_code

// Pages as the identify command prints them: each page's lines, pages separated by "--".
std::string render_pages(const std::vector<records::Page>& pages);

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace diane::cli
