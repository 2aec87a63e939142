#include "diane/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace diane::synth {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = 0;
    while (u1 <= 0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
}

int Rng::integer(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(engine_() % span);
}

namespace {

std::uint8_t to_pixel(double v) { return static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0)); }

enum class Region { Ring, Forehead, Eye, Bridge, Mouth, Skin };

// Layout in 24x24 face units.
Region region_at(double u, double v) {
    if (u < 2 || u >= 22 || v < 2) return Region::Ring;
    if (v < 7) return Region::Forehead;
    if (v >= 8 && v < 12) {
        if ((u >= 4 && u < 10) || (u >= 14 && u < 20)) return Region::Eye;
        if (u >= 10 && u < 14) return Region::Bridge;
    }
    if (v >= 17 && v < 20 && u >= 7 && u < 17) return Region::Mouth;
    return Region::Skin;
}

}  // namespace

FaceStyle make_subject(std::uint64_t seed) {
    Rng rng(seed);
    FaceStyle s;
    s.ring = rng.uniform(25, 45);
    s.forehead = rng.uniform(190, 215);
    s.eyes = rng.uniform(25, 50);
    s.bridge = rng.uniform(175, 200);
    s.skin = rng.uniform(145, 175);
    s.mouth = rng.uniform(45, 70);
    const int bumps = 8;
    for (int i = 0; i < bumps; ++i) {
        Bump b;
        b.cx = rng.uniform(3, 21);
        b.cy = rng.uniform(3, 21);
        b.sigma = rng.uniform(2.5, 5.0);
        b.amplitude = rng.uniform(40, 70) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        s.texture.push_back(b);
    }
    return s;
}

GrayImage render_face(const FaceStyle& style, int size, Rng& rng, double noise_sigma) {
    GrayImage img(size, size);
    const double unit = 24.0 / size;
    for (int py = 0; py < size; ++py) {
        for (int px = 0; px < size; ++px) {
            const double u = (px + 0.5) * unit;
            const double v = (py + 0.5) * unit;
            double tex = 0;
            for (const auto& b : style.texture) {
                const double du = u - b.cx, dv = v - b.cy;
                tex += b.amplitude * std::exp(-(du * du + dv * dv) / (2 * b.sigma * b.sigma));
            }
            // texture fades out toward the outline
            const double edge = std::min({u, 24.0 - u, v, 24.0 - v});
            tex *= std::clamp((edge - 2.0) / 3.0, 0.0, 1.0);
            double base = style.skin;
            switch (region_at(u, v)) {
            case Region::Ring: base = style.ring; tex *= 0.5; break;
            case Region::Forehead: base = style.forehead; break;
            case Region::Eye: base = style.eyes; tex *= 0.5; break;
            case Region::Bridge: base = style.bridge; break;
            case Region::Mouth: base = style.mouth; tex *= 0.5; break;
            case Region::Skin: break;
            }
            img.at(px, py) = to_pixel(base + tex + noise_sigma * rng.normal());
        }
    }
    return img;
}

GrayImage render_background(int width, int height, Rng& rng) {
    GrayImage img(width, height);
    const double tilt = rng.uniform(-12, 12);
    const double level = rng.uniform(112, 128);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x)
            img.at(x, y) = to_pixel(level + tilt * (static_cast<double>(x) / width - 0.5) + 3.0 * rng.normal());
    return img;
}

void paste(GrayImage& frame, const GrayImage& face, int x, int y) {
    if (!Rect(x, y, face.width(), face.height()).fits(frame.width(), frame.height()))
        throw imaging::OutOfBounds("paste: face does not fit in frame");
    for (int fy = 0; fy < face.height(); ++fy)
        for (int fx = 0; fx < face.width(); ++fx) frame.at(x + fx, y + fy) = face.at(fx, fy);
}

GrayImage render_frame(int width, int height, const FaceStyle& style, const Rect& at, Rng& rng,
                       double noise_sigma) {
    if (at.w() != at.h()) throw std::invalid_argument("render_frame: faces are square");
    GrayImage frame = render_background(width, height, rng);
    paste(frame, render_face(style, at.w(), rng, noise_sigma), at.x(), at.y());
    return frame;
}

Benchmark make_benchmark(std::uint64_t seed, int subjects, int images_per_subject, int impostors, int face_size,
                         double noise_sigma) {
    Benchmark bench;
    Rng rng(seed);
    auto label = [](const char* prefix, int i) {
        std::string n = std::to_string(i + 1);
        return prefix + std::string(n.size() < 2 ? 2 - n.size() : 0, '0') + n;
    };
    for (int s = 0; s < subjects; ++s) {
        const auto style = make_subject(seed * 1000 + static_cast<std::uint64_t>(s));
        for (int i = 0; i < images_per_subject; ++i)
            bench.gallery.push_back({render_face(style, face_size, rng, noise_sigma), label("S", s)});
    }
    for (int s = 0; s < impostors; ++s) {
        const auto style = make_subject(seed * 1000 + 500 + static_cast<std::uint64_t>(s));
        bench.impostors.push_back({render_face(style, face_size, rng, noise_sigma), label("X", s)});
    }
    return bench;
}

}  // namespace diane::synth
