#include "diane/imaging.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace diane::imaging {

GrayImage::GrayImage(int width, int height, std::uint8_t fill)
    : GrayImage(width, height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(std::max(width, 0)) *
                                              static_cast<std::size_t>(std::max(height, 0)),
                                          fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<std::uint8_t> data)
    : width_(width), height_(height), data_(std::move(data)) {
    if (width < 1 || height < 1)
        throw std::invalid_argument("GrayImage dimensions must be >= 1");
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
        throw std::invalid_argument("GrayImage data length does not match width*height");
}

Rect::Rect(int x, int y, int w, int h) : x_(x), y_(y), w_(w), h_(h) {
    if (w < 1 || h < 1) throw std::invalid_argument("Rect extent must be >= 1");
    if (x < 0 || y < 0) throw std::invalid_argument("Rect offset must be >= 0");
}

IntegralImage::IntegralImage(int width, int height, std::vector<std::int64_t> sums)
    : width_(width), height_(height), sums_(std::move(sums)) {
    if (sums_.size() != static_cast<std::size_t>(width + 1) * static_cast<std::size_t>(height + 1))
        throw std::invalid_argument("IntegralImage size mismatch");
}

namespace {

class HeaderReader {
public:
    explicit HeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments, then reads a decimal field.
    long long number(const char* field) {
        skip_space_and_comments();
        if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_]))
            throw PgmError(PgmError::Kind::MalformedHeader, std::string("PGM: missing ") + field);
        long long v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + (bytes_[pos_] - '0');
            if (v > std::numeric_limits<int>::max())
                throw PgmError(PgmError::Kind::MalformedHeader, std::string("PGM: ") + field + " too large");
            ++pos_;
        }
        return v;
    }

    // Exactly one whitespace byte separates maxval from the raster.
    void single_space() {
        if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_]))
            throw PgmError(PgmError::Kind::MalformedHeader, "PGM: missing whitespace after maxval");
        ++pos_;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space_and_comments() {
        while (pos_ < bytes_.size()) {
            if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
            } else {
                break;
            }
        }
    }

    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

std::uint8_t round_to_byte(double v) {
    return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
}

IntegralImage build_integral(const GrayImage& img, bool squared) {
    const int w = img.width();
    const int h = img.height();
    std::vector<std::int64_t> sums(static_cast<std::size_t>(w + 1) * (h + 1), 0);
    for (int y = 0; y < h; ++y) {
        std::int64_t row = 0;
        for (int x = 0; x < w; ++x) {
            std::int64_t p = img.at(x, y);
            row += squared ? p * p : p;
            sums[static_cast<std::size_t>(y + 1) * (w + 1) + x + 1] =
                sums[static_cast<std::size_t>(y) * (w + 1) + x + 1] + row;
        }
    }
    return IntegralImage(w, h, std::move(sums));
}

}  // namespace

GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
        throw PgmError(PgmError::Kind::MalformedHeader, "PGM: missing P5 magic");
    HeaderReader reader(bytes);
    reader.advance(2);
    if (reader.pos() >= bytes.size() || !(std::isspace(bytes[reader.pos()]) || bytes[reader.pos()] == '#'))
        throw PgmError(PgmError::Kind::MalformedHeader, "PGM: bad magic");

    long long width = reader.number("width");
    long long height = reader.number("height");
    long long maxval = reader.number("maxval");
    if (width < 1 || height < 1)
        throw PgmError(PgmError::Kind::MalformedHeader, "PGM: dimensions must be >= 1");
    if (maxval > 255)
        throw PgmError(PgmError::Kind::UnsupportedMaxval, "PGM: maxval " + std::to_string(maxval) + " > 255");
    if (maxval < 1) throw PgmError(PgmError::Kind::MalformedHeader, "PGM: maxval must be >= 1");
    reader.single_space();

    const auto count = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (bytes.size() - reader.pos() < count)
        throw PgmError(PgmError::Kind::TruncatedPayload,
                       "PGM: payload has " + std::to_string(bytes.size() - reader.pos()) + " of " +
                           std::to_string(count) + " bytes");
    auto first = bytes.begin() + static_cast<std::ptrdiff_t>(reader.pos());
    return GrayImage(static_cast<int>(width), static_cast<int>(height),
                     std::vector<std::uint8_t>(first, first + static_cast<std::ptrdiff_t>(count)));
}

GrayImage decode_pgm(const std::string& bytes) {
    return decode_pgm(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(bytes.data()),
                                                    bytes.size()));
}

std::vector<std::uint8_t> encode_pgm(const GrayImage& img) {
    std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

GrayImage read_pgm_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_pgm(bytes);
}

void write_pgm_file(const std::string& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path);
    auto bytes = encode_pgm(img);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for " + path);
}

GrayImage resize_bilinear(const GrayImage& img, int w, int h) {
    if (w < 1 || h < 1) throw std::invalid_argument("resize target must be >= 1x1");
    const int sw = img.width();
    const int sh = img.height();
    if (w == sw && h == sh) return img;

    auto source_coord = [](int dst, int src_len, int dst_len) {
        double s = (dst + 0.5) * src_len / dst_len - 0.5;
        return std::clamp(s, 0.0, static_cast<double>(src_len - 1));
    };

    GrayImage out(w, h);
    for (int y = 0; y < h; ++y) {
        double sy = source_coord(y, sh, h);
        int y0 = static_cast<int>(std::floor(sy));
        int y1 = std::min(y0 + 1, sh - 1);
        double fy = sy - y0;
        for (int x = 0; x < w; ++x) {
            double sx = source_coord(x, sw, w);
            int x0 = static_cast<int>(std::floor(sx));
            int x1 = std::min(x0 + 1, sw - 1);
            double fx = sx - x0;
            double top = img.at(x0, y0) * (1.0 - fx) + img.at(x1, y0) * fx;
            double bottom = img.at(x0, y1) * (1.0 - fx) + img.at(x1, y1) * fx;
            out.at(x, y) = round_to_byte(top * (1.0 - fy) + bottom * fy);
        }
    }
    return out;
}

GrayImage equalize_histogram(const GrayImage& img) {
    std::array<std::int64_t, 256> cdf{};
    for (auto p : img.pixels()) ++cdf[p];
    for (std::size_t v = 1; v < cdf.size(); ++v) cdf[v] += cdf[v - 1];

    const auto n = static_cast<std::int64_t>(img.size());
    std::int64_t cdf_min = 0;
    for (auto c : cdf) {
        if (c > 0) {
            cdf_min = c;
            break;
        }
    }
    if (cdf_min == n) return img;  // single grey level

    std::array<std::uint8_t, 256> lut{};
    for (std::size_t v = 0; v < lut.size(); ++v) {
        if (cdf[v] < cdf_min) continue;  // level absent below the first occupied bin
        lut[v] = round_to_byte(255.0 * static_cast<double>(cdf[v] - cdf_min) / static_cast<double>(n - cdf_min));
    }
    GrayImage out = img;
    for (auto& p : out.pixels()) p = lut[p];
    return out;
}

GrayImage crop(const GrayImage& img, const Rect& r) {
    if (!r.fits(img.width(), img.height())) throw OutOfBounds("crop rect outside image");
    GrayImage out(r.w(), r.h());
    for (int y = 0; y < r.h(); ++y)
        for (int x = 0; x < r.w(); ++x) out.at(x, y) = img.at(r.x() + x, r.y() + y);
    return out;
}

IntegralImage integral_image(const GrayImage& img) { return build_integral(img, false); }

IntegralImage squared_integral_image(const GrayImage& img) { return build_integral(img, true); }

std::int64_t rect_sum(const IntegralImage& ii, const Rect& r) {
    if (!r.fits(ii.width(), ii.height())) throw OutOfBounds("rect_sum: rect outside image");
    const int x1 = r.x() + r.w();
    const int y1 = r.y() + r.h();
    return ii.at(x1, y1) - ii.at(x1, r.y()) - ii.at(r.x(), y1) + ii.at(r.x(), r.y());
}

}  // namespace diane::imaging
