#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace diane::base64 {

std::string encode(std::span<const std::uint8_t> bytes);

// Standard alphabet with '=' padding; ASCII whitespace is skipped. Returns
// nullopt for any other character, bad padding or non-zero trailing bits.
std::optional<std::vector<std::uint8_t>> decode(std::string_view text);

}  // namespace diane::base64
