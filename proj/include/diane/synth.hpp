#pragma once

// Seeded synthetic faces and camera frames. The random stream is mt19937_64
// and the uniform/normal transforms are spelled out instead of using
// <random>'s implementation-defined distributions, so a seed names the same
// images on every standard library.

#include "diane/imaging.hpp"

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace diane::synth {

using imaging::GrayImage;
using imaging::Rect;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);   // [lo, hi)
    double normal();                        // standard normal, Box-Muller
    int integer(int lo, int hi);            // [lo, hi]

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0;
};

struct Bump {
    double cx, cy;  // face units, 24x24 layout
    double sigma;
    double amplitude;
};

// Identity-bearing appearance of one synthetic subject.
struct FaceStyle {
    double ring = 35;       // dark hairline / face outline
    double forehead = 200;
    double eyes = 35;
    double bridge = 185;
    double skin = 160;
    double mouth = 55;
    std::vector<Bump> texture;
};

FaceStyle make_subject(std::uint64_t seed);

// Renders a size x size face. Pixel noise is N(0, noise_sigma) grey levels.
GrayImage render_face(const FaceStyle& style, int size, Rng& rng, double noise_sigma);

// Mid-grey background with a gentle gradient and mild sensor noise.
GrayImage render_background(int width, int height, Rng& rng);

// Copies face into frame at (x, y).
void paste(GrayImage& frame, const GrayImage& face, int x, int y);

// Frame with one face planted at rect (face rendered at rect.w x rect.h).
GrayImage render_frame(int width, int height, const FaceStyle& style, const Rect& at, Rng& rng,
                       double noise_sigma);

// Recognition benchmark corpus: subjects x images_per_subject gallery faces and
// one probe per impostor subject never seen in the gallery.
struct Benchmark {
    struct Sample {
        GrayImage image;
        std::string label;
    };
    std::vector<Sample> gallery;
    std::vector<Sample> impostors;
};

inline constexpr std::uint64_t kBenchmarkSeed = 20160512;
inline constexpr double kBenchmarkNoise = 8.0;  // grey levels, i.e. 8/255 of full scale

Benchmark make_benchmark(std::uint64_t seed = kBenchmarkSeed, int subjects = 10, int images_per_subject = 3,
                         int impostors = 5, int face_size = 48, double noise_sigma = kBenchmarkNoise);

}  // namespace diane::synth
