#pragma once

#include "diane/imaging.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace diane::testing {

inline std::filesystem::path source_path(const std::string& rel) { return std::filesystem::path(DIANE_SOURCE_DIR) / rel; }

inline std::filesystem::path fixture_dir() { return source_path("data/fixture"); }

inline std::filesystem::path cascade_path() { return source_path("data/cascades/synthetic-face.cascade"); }

// Fresh directory removed on destruction.
class TempDir {
public:
    TempDir() {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("diane-test-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

// The shipped fixture copied somewhere writable.
inline void copy_fixture(const std::filesystem::path& to) {
    std::filesystem::copy(fixture_dir(), to, std::filesystem::copy_options::recursive);
}

inline imaging::GrayImage random_image(std::mt19937_64& rng, int w, int h) {
    imaging::GrayImage img(w, h);
    std::uniform_int_distribution<int> px(0, 255);
    for (auto& p : img.pixels()) p = static_cast<std::uint8_t>(px(rng));
    return img;
}

}  // namespace diane::testing
