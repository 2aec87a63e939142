#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diane::imaging {

// 8-bit single-channel raster, row-major.
class GrayImage {
public:
    GrayImage(int width, int height, std::uint8_t fill = 0);
    GrayImage(int width, int height, std::vector<std::uint8_t> data);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t size() const { return data_.size(); }

    std::uint8_t at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    std::uint8_t& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    std::span<const std::uint8_t> pixels() const { return data_; }
    std::span<std::uint8_t> pixels() { return data_; }

    bool operator==(const GrayImage&) const = default;

private:
    int width_;
    int height_;
    std::vector<std::uint8_t> data_;
};

// Axis-aligned rectangle with positive extent. Construction with w < 1 or h < 1 throws.
class Rect {
public:
    Rect(int x, int y, int w, int h);

    int x() const { return x_; }
    int y() const { return y_; }
    int w() const { return w_; }
    int h() const { return h_; }
    long long area() const { return static_cast<long long>(w_) * h_; }

    bool fits(int width, int height) const {
        return x_ >= 0 && y_ >= 0 && x_ + w_ <= width && y_ + h_ <= height;
    }

    bool operator==(const Rect&) const = default;

private:
    int x_, y_, w_, h_;
};

// Summed-area table with a zero top row and left column: (width+1) x (height+1) entries.
class IntegralImage {
public:
    IntegralImage(int width, int height, std::vector<std::int64_t> sums);

    int width() const { return width_; }
    int height() const { return height_; }

    // Sum of all pixels strictly above and left of (x, y); 0 <= x <= width, 0 <= y <= height.
    std::int64_t at(int x, int y) const {
        return sums_[static_cast<std::size_t>(y) * (width_ + 1) + x];
    }

private:
    int width_;
    int height_;
    std::vector<std::int64_t> sums_;
};

class PgmError : public std::runtime_error {
public:
    enum class Kind { MalformedHeader, TruncatedPayload, UnsupportedMaxval };
    PgmError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class OutOfBounds : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

GrayImage decode_pgm(std::span<const std::uint8_t> bytes);
GrayImage decode_pgm(const std::string& bytes);
std::vector<std::uint8_t> encode_pgm(const GrayImage& img);

GrayImage read_pgm_file(const std::string& path);
void write_pgm_file(const std::string& path, const GrayImage& img);

GrayImage resize_bilinear(const GrayImage& img, int w, int h);
GrayImage equalize_histogram(const GrayImage& img);
GrayImage crop(const GrayImage& img, const Rect& r);

IntegralImage integral_image(const GrayImage& img);
// Integral image of squared pixel values, used for window variance.
IntegralImage squared_integral_image(const GrayImage& img);

std::int64_t rect_sum(const IntegralImage& ii, const Rect& r);

}  // namespace diane::imaging
