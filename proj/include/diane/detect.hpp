#pragma once

#include "diane/imaging.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace diane::detect {

using imaging::GrayImage;
using imaging::IntegralImage;
using imaging::Rect;

struct WeightedRect {
    Rect rect;  // base-window coordinates
    double weight;
};

// Decision stump over 2 or 3 weighted rectangles.
struct HaarFeature {
    std::vector<WeightedRect> rects;
    double threshold;
    double left_val;
    double right_val;
};

struct HaarStage {
    std::vector<HaarFeature> features;
    double stage_threshold;
};

struct HaarCascade {
    int base_w = 24;
    int base_h = 24;
    std::vector<HaarStage> stages;
};

struct Detection {
    Rect rect;
    int neighbors;

    bool operator==(const Detection&) const = default;
};

struct DetectParams {
    double scale_factor = 1.25;
    int min_size = 48;
    int step = 2;
    int min_neighbors = 3;
    double group_eps = 0.2;
};

class CascadeError : public std::runtime_error {
public:
    enum class Kind { ParseError, InvalidCascade };
    CascadeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

HaarCascade load_cascade(const std::string& text);
HaarCascade load_cascade_file(const std::string& path);

// Normalized response of one feature for a window: weighted rect sums over
// (window area * window standard deviation), rects scaled to the window.
double feature_value(const HaarFeature& f, const HaarCascade& c, const IntegralImage& ii,
                     const IntegralImage& sq_ii, const Rect& win);

bool eval_window(const HaarCascade& c, const IntegralImage& ii, const IntegralImage& sq_ii, const Rect& win);

// Every window position visited by detect_faces, in scan order.
std::vector<Rect> scan_windows(const HaarCascade& c, int width, int height, const DetectParams& params);

// Windows accepted by the cascade, before grouping.
std::vector<Rect> detect_raw(const HaarCascade& c, const GrayImage& img, const DetectParams& params);

std::vector<Detection> detect_faces(const HaarCascade& c, const GrayImage& img, const DetectParams& params = {});

std::vector<Detection> group_rects(const std::vector<Rect>& raw, int min_neighbors, double eps);

}  // namespace diane::detect
