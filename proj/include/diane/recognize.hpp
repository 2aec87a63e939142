#pragma once

// Eigenfaces: PCA over mean-centred face vectors computed through the M x M
// inner-product matrix, nearest-neighbour identification in face space, and
// a similarity threshold deciding known versus unknown.

#include "diane/imaging.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace diane::recognize {

using imaging::GrayImage;

inline constexpr int kCanonicalRaster = 64;
inline constexpr int kDefaultKMax = 16;
inline constexpr double kDefaultThreshold = 0.22;  // calibrated on the synthetic benchmark
inline constexpr double kEigenvalueFloor = 1e-10;  // relative to trace(L)

// Flattened, equalized raster scaled to [0, 1].
using FaceVector = std::vector<double>;

struct FaceSignature {
    std::vector<double> weights;

    bool operator==(const FaceSignature&) const = default;
};

struct GalleryEntry {
    std::string label;
    FaceSignature signature;

    bool operator==(const GalleryEntry&) const = default;
};

struct EigenModel {
    int raster_w = kCanonicalRaster;
    int raster_h = kCanonicalRaster;
    FaceVector mean;
    std::vector<FaceVector> basis;    // unit eigenfaces, descending eigenvalue
    std::vector<double> eigenvalues;  // of A^T A, same order as basis
    std::vector<GalleryEntry> gallery;

    std::size_t k() const { return basis.size(); }
    std::size_t dimension() const { return static_cast<std::size_t>(raster_w) * raster_h; }

    bool operator==(const EigenModel&) const = default;
};

struct LabeledImage {
    GrayImage image;
    std::string label;
};

struct Known {
    std::string label;
    double distance;
    double similarity;
};

struct Unknown {
    double best_distance;
};

using IdentifyResult = std::variant<Known, Unknown>;

class RecognizeError : public std::runtime_error {
public:
    enum class Kind { InsufficientGallery, DegenerateGallery, EmptyGallery, BadModelFile };
    RecognizeError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

FaceVector preprocess(const GrayImage& img, int raster_w, int raster_h);

EigenModel train(const std::vector<LabeledImage>& gallery, int k_max = kDefaultKMax,
                 int raster_w = kCanonicalRaster, int raster_h = kCanonicalRaster);

FaceSignature project(const EigenModel& m, const GrayImage& img);
FaceSignature project_vector(const EigenModel& m, std::span<const double> face);

// Mean plus the first `components` eigenfaces weighted by the signature
// (all of them when components is negative). Unclamped.
FaceVector reconstruct_vector(const EigenModel& m, const FaceSignature& s, int components = -1);
GrayImage reconstruct(const EigenModel& m, const FaceSignature& s);

// Distance between a probe's face vector and its reconstruction: how far it
// sits from face space. Diagnostic only, never gates identify().
double face_space_distance(const EigenModel& m, const GrayImage& img);

double similarity(double distance);

IdentifyResult identify(const EigenModel& m, const GrayImage& img, double theta = kDefaultThreshold);
IdentifyResult identify_signature(const EigenModel& m, const FaceSignature& probe, double theta);

std::vector<std::uint8_t> serialize_model(const EigenModel& m);
EigenModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const EigenModel& m, const std::string& path);
EigenModel load_model(const std::string& path);

}  // namespace diane::recognize
