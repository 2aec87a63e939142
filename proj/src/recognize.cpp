#include "diane/recognize.hpp"

#include "diane/linalg.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

namespace diane::recognize {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

void require_dimension(const EigenModel& m, std::size_t size) {
    if (size != m.dimension()) throw std::invalid_argument("face vector length does not match the model raster");
}

// Fixed sign per eigenface: its largest-magnitude component is positive.
void canonical_sign(FaceVector& u) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < u.size(); ++i)
        if (std::abs(u[i]) > std::abs(u[best])) best = i;
    if (u[best] < 0)
        for (double& x : u) x = -x;
}

}  // namespace

FaceVector preprocess(const GrayImage& img, int raster_w, int raster_h) {
    const auto canonical = imaging::equalize_histogram(imaging::resize_bilinear(img, raster_w, raster_h));
    FaceVector v;
    v.reserve(canonical.size());
    for (auto p : canonical.pixels()) v.push_back(p / 255.0);
    return v;
}

EigenModel train(const std::vector<LabeledImage>& gallery, int k_max, int raster_w, int raster_h) {
    const auto m_count = gallery.size();
    if (m_count < 2)
        throw RecognizeError(RecognizeError::Kind::InsufficientGallery,
                             "training needs at least 2 images, got " + std::to_string(m_count));
    if (k_max < 1) throw std::invalid_argument("k_max must be >= 1");

    EigenModel model;
    model.raster_w = raster_w;
    model.raster_h = raster_h;
    const std::size_t dim = model.dimension();

    std::vector<FaceVector> faces;
    faces.reserve(m_count);
    for (const auto& g : gallery) faces.push_back(preprocess(g.image, raster_w, raster_h));

    model.mean.assign(dim, 0.0);
    for (const auto& f : faces)
        for (std::size_t i = 0; i < dim; ++i) model.mean[i] += f[i];
    for (double& x : model.mean) x /= static_cast<double>(m_count);

    // Columns of A: difference faces.
    std::vector<FaceVector> diffs = faces;
    for (auto& d : diffs)
        for (std::size_t i = 0; i < dim; ++i) d[i] -= model.mean[i];

    const int n = static_cast<int>(m_count);
    std::vector<double> inner(m_count * m_count);
    double trace = 0;
    for (std::size_t i = 0; i < m_count; ++i) {
        for (std::size_t j = i; j < m_count; ++j) {
            const double v = dot(diffs[i], diffs[j]);
            inner[i * m_count + j] = inner[j * m_count + i] = v;
        }
        trace += inner[i * m_count + i];
    }

    // Identical faces leave only rounding noise in A; compare against the raw signal.
    double energy = 0;
    for (const auto& f : faces) energy += dot(f, f);
    if (!(trace > kEigenvalueFloor * energy))
        throw RecognizeError(RecognizeError::Kind::DegenerateGallery,
                             "gallery images are indistinguishable after preprocessing");

    const auto eig = linalg::jacobi_eigen(inner, n);
    const double floor = kEigenvalueFloor * trace;
    const std::size_t limit = std::min<std::size_t>({static_cast<std::size_t>(k_max), m_count - 1});
    for (std::size_t j = 0; j < m_count && model.basis.size() < limit; ++j) {
        const double lambda = eig.values[j];
        if (!(lambda >= floor) || lambda <= 0.0) break;  // values are sorted descending
        FaceVector u(dim, 0.0);
        for (std::size_t i = 0; i < m_count; ++i) {
            const double coeff = eig.vectors[i * m_count + j];
            for (std::size_t p = 0; p < dim; ++p) u[p] += coeff * diffs[i][p];
        }
        // Re-orthogonalize against earlier eigenfaces to remove rounding drift.
        for (const auto& prev : model.basis) {
            const double c = dot(u, prev);
            for (std::size_t p = 0; p < dim; ++p) u[p] -= c * prev[p];
        }
        const double norm = std::sqrt(dot(u, u));
        for (double& x : u) x /= norm;
        canonical_sign(u);
        model.basis.push_back(std::move(u));
        model.eigenvalues.push_back(lambda);
    }
    if (model.basis.empty())
        throw RecognizeError(RecognizeError::Kind::DegenerateGallery,
                             "no eigenvalue above the floor; gallery images are indistinguishable");

    model.gallery.reserve(m_count);
    for (std::size_t i = 0; i < m_count; ++i)
        model.gallery.push_back({gallery[i].label, project_vector(model, faces[i])});
    return model;
}

FaceSignature project_vector(const EigenModel& m, std::span<const double> face) {
    require_dimension(m, face.size());
    FaceVector diff(face.begin(), face.end());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= m.mean[i];
    FaceSignature s;
    s.weights.reserve(m.k());
    for (const auto& u : m.basis) s.weights.push_back(dot(u, diff));
    return s;
}

FaceSignature project(const EigenModel& m, const GrayImage& img) {
    return project_vector(m, preprocess(img, m.raster_w, m.raster_h));
}

FaceVector reconstruct_vector(const EigenModel& m, const FaceSignature& s, int components) {
    if (s.weights.size() != m.k()) throw std::invalid_argument("signature length does not match the model");
    const std::size_t use = components < 0 ? m.k() : std::min<std::size_t>(m.k(), static_cast<std::size_t>(components));
    FaceVector out = m.mean;
    for (std::size_t j = 0; j < use; ++j)
        for (std::size_t p = 0; p < out.size(); ++p) out[p] += s.weights[j] * m.basis[j][p];
    return out;
}

GrayImage reconstruct(const EigenModel& m, const FaceSignature& s) {
    const auto v = reconstruct_vector(m, s);
    GrayImage img(m.raster_w, m.raster_h);
    auto px = img.pixels();
    for (std::size_t i = 0; i < v.size(); ++i)
        px[i] = static_cast<std::uint8_t>(std::floor(std::clamp(v[i], 0.0, 1.0) * 255.0 + 0.5));
    return img;
}

double face_space_distance(const EigenModel& m, const GrayImage& img) {
    const auto face = preprocess(img, m.raster_w, m.raster_h);
    const auto back = reconstruct_vector(m, project_vector(m, face));
    double acc = 0;
    for (std::size_t i = 0; i < face.size(); ++i) acc += (face[i] - back[i]) * (face[i] - back[i]);
    return std::sqrt(acc);
}

double similarity(double distance) { return 1.0 / (1.0 + distance); }

IdentifyResult identify_signature(const EigenModel& m, const FaceSignature& probe, double theta) {
    if (m.gallery.empty()) throw RecognizeError(RecognizeError::Kind::EmptyGallery, "model has no gallery entries");
    if (!(theta > 0.0 && theta <= 1.0)) throw std::invalid_argument("threshold must be in (0, 1]");
    const GalleryEntry* best = nullptr;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (const auto& g : m.gallery) {
        double d2 = 0;
        for (std::size_t i = 0; i < probe.weights.size(); ++i) {
            const double d = probe.weights[i] - g.signature.weights[i];
            d2 += d * d;
        }
        if (d2 < best_d2 || (d2 == best_d2 && best && g.label < best->label)) {
            best_d2 = d2;
            best = &g;
        }
    }
    const double eps = std::sqrt(best_d2);
    const double s = similarity(eps);
    if (s > theta) return Known{best->label, eps, s};
    return Unknown{eps};
}

IdentifyResult identify(const EigenModel& m, const GrayImage& img, double theta) {
    return identify_signature(m, project(m, img), theta);
}

// Model file: "DIANEEIG" magic, u32 version, then little-endian fields.
namespace {

constexpr char kMagic[8] = {'D', 'I', 'A', 'N', 'E', 'E', 'I', 'G'};
constexpr std::uint32_t kVersion = 1;

class Writer {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out.insert(out.end(), s.begin(), s.end());
    }
    void vec(const std::vector<double>& v) {
        for (double x : v) f64(x);
    }
    std::vector<std::uint8_t> out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> b) : bytes(b) {}
    std::uint64_t uint(int width) {
        need(static_cast<std::size_t>(width));
        std::uint64_t v = 0;
        for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * i);
        return v;
    }
    std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
    double f64() { return std::bit_cast<double>(uint(8)); }
    std::string str() {
        const auto n = u32();
        need(n);
        std::string s(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
    std::vector<double> vec(std::size_t n) {
        need(n * 8);
        std::vector<double> v(n);
        for (double& x : v) x = f64();
        return v;
    }
    void need(std::size_t n) const {
        if (bytes.size() - pos < n) throw RecognizeError(RecognizeError::Kind::BadModelFile, "model file truncated");
    }
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_model(const EigenModel& m) {
    Writer w;
    w.out.insert(w.out.end(), std::begin(kMagic), std::end(kMagic));
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(m.raster_w));
    w.u32(static_cast<std::uint32_t>(m.raster_h));
    w.u32(static_cast<std::uint32_t>(m.k()));
    w.u32(static_cast<std::uint32_t>(m.gallery.size()));
    w.vec(m.mean);
    w.vec(m.eigenvalues);
    for (const auto& u : m.basis) w.vec(u);
    for (const auto& g : m.gallery) {
        w.str(g.label);
        w.vec(g.signature.weights);
    }
    return std::move(w.out);
}

EigenModel deserialize_model(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    r.need(sizeof kMagic);
    if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw RecognizeError(RecognizeError::Kind::BadModelFile, "not a model file");
    r.pos = sizeof kMagic;
    if (r.u32() != kVersion) throw RecognizeError(RecognizeError::Kind::BadModelFile, "unsupported model version");
    EigenModel m;
    m.raster_w = static_cast<int>(r.u32());
    m.raster_h = static_cast<int>(r.u32());
    const auto k = r.u32();
    const auto gallery = r.u32();
    if (m.raster_w < 1 || m.raster_h < 1 || m.raster_w > 4096 || m.raster_h > 4096)
        throw RecognizeError(RecognizeError::Kind::BadModelFile, "bad raster size");
    const auto dim = m.dimension();
    m.mean = r.vec(dim);
    m.eigenvalues = r.vec(k);
    for (std::uint32_t i = 0; i < k; ++i) m.basis.push_back(r.vec(dim));
    for (std::uint32_t i = 0; i < gallery; ++i) {
        GalleryEntry g;
        g.label = r.str();
        g.signature.weights = r.vec(k);
        m.gallery.push_back(std::move(g));
    }
    if (r.pos != bytes.size()) throw RecognizeError(RecognizeError::Kind::BadModelFile, "trailing bytes in model file");
    return m;
}

void save_model(const EigenModel& m, const std::string& path) {
    const auto bytes = serialize_model(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("cannot write model " + path);
}

EigenModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_model(bytes);
}

}  // namespace diane::recognize
