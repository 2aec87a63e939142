#include "diane/detect.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>
#include <tuple>

namespace diane::detect {

namespace {

[[noreturn]] void parse_fail(int line_no, const std::string& msg) {
    throw CascadeError(CascadeError::Kind::ParseError,
                       "cascade line " + std::to_string(line_no) + ": " + msg);
}

[[noreturn]] void invalid(std::size_t stage, std::size_t feature, const std::string& msg) {
    throw CascadeError(CascadeError::Kind::InvalidCascade,
                       "stage " + std::to_string(stage) + " feature " + std::to_string(feature) + ": " + msg);
}

double parse_number(const std::string& token, int line_no) {
    std::size_t used = 0;
    double v = 0;
    try {
        v = std::stod(token, &used);
    } catch (const std::exception&) {
        parse_fail(line_no, "expected a number, got '" + token + "'");
    }
    if (used != token.size() || !std::isfinite(v)) parse_fail(line_no, "bad number '" + token + "'");
    return v;
}

int parse_int(const std::string& token, int line_no) {
    double v = parse_number(token, line_no);
    if (v != std::floor(v) || std::abs(v) > 1e6) parse_fail(line_no, "expected an integer, got '" + token + "'");
    return static_cast<int>(v);
}

void validate(const HaarCascade& c) {
    if (c.base_w != 24 || c.base_h != 24)
        throw CascadeError(CascadeError::Kind::InvalidCascade, "base window must be 24x24");
    if (c.stages.empty()) throw CascadeError(CascadeError::Kind::InvalidCascade, "cascade has no stages");
    for (std::size_t s = 0; s < c.stages.size(); ++s) {
        const auto& stage = c.stages[s];
        if (stage.features.empty())
            throw CascadeError(CascadeError::Kind::InvalidCascade, "stage " + std::to_string(s) + " has no features");
        for (std::size_t f = 0; f < stage.features.size(); ++f) {
            const auto& feat = stage.features[f];
            if (feat.rects.size() < 2 || feat.rects.size() > 3) invalid(s, f, "needs 2 or 3 rects");
            double balance = 0;
            double magnitude = 0;
            for (const auto& wr : feat.rects) {
                if (!wr.rect.fits(c.base_w, c.base_h)) invalid(s, f, "rect exceeds the base window");
                balance += wr.weight * static_cast<double>(wr.rect.area());
                magnitude += std::abs(wr.weight * static_cast<double>(wr.rect.area()));
            }
            if (std::abs(balance) > 1e-9 * magnitude) invalid(s, f, "weighted rect areas do not sum to zero");
        }
    }
}

struct ScaledRect {
    Rect rect;
    double weight;
};

// Rects mapped into the window; the first weight is re-balanced so the
// rounded areas still cancel on a flat patch.
std::vector<ScaledRect> scale_feature(const HaarFeature& f, const HaarCascade& c, const Rect& win) {
    const double s = static_cast<double>(win.w()) / c.base_w;
    std::vector<ScaledRect> out;
    out.reserve(f.rects.size());
    for (const auto& wr : f.rects) {
        int x = static_cast<int>(std::lround(wr.rect.x() * s));
        int y = static_cast<int>(std::lround(wr.rect.y() * s));
        int w = std::max(1, static_cast<int>(std::lround(wr.rect.w() * s)));
        int h = std::max(1, static_cast<int>(std::lround(wr.rect.h() * s)));
        w = std::min(w, win.w() - x);
        h = std::min(h, win.h() - y);
        out.push_back({Rect(win.x() + x, win.y() + y, std::max(w, 1), std::max(h, 1)), wr.weight});
    }
    double rest = 0;
    for (std::size_t i = 1; i < out.size(); ++i) rest += out[i].weight * static_cast<double>(out[i].rect.area());
    out[0].weight = -rest / static_cast<double>(out[0].rect.area());
    return out;
}

double window_stddev(const IntegralImage& ii, const IntegralImage& sq_ii, const Rect& win) {
    const double area = static_cast<double>(win.area());
    const double mean = static_cast<double>(imaging::rect_sum(ii, win)) / area;
    const double var = static_cast<double>(imaging::rect_sum(sq_ii, win)) / area - mean * mean;
    return std::sqrt(std::max(var, 1.0));
}

double scaled_value(const std::vector<ScaledRect>& rects, const IntegralImage& ii, double norm) {
    double acc = 0;
    for (const auto& sr : rects) acc += sr.weight * static_cast<double>(imaging::rect_sum(ii, sr.rect));
    return acc / norm;
}

void check_window(const HaarCascade& c, const IntegralImage& ii, const Rect& win) {
    if (!win.fits(ii.width(), ii.height())) throw imaging::OutOfBounds("window outside image");
    if (static_cast<long long>(win.w()) * c.base_h != static_cast<long long>(win.h()) * c.base_w)
        throw std::invalid_argument("window aspect must match the cascade base window");
}

std::vector<double> window_scales(const HaarCascade& c, int width, int height, const DetectParams& p) {
    if (p.scale_factor <= 1.0) throw std::invalid_argument("scale_factor must be > 1");
    if (p.step < 1) throw std::invalid_argument("step must be >= 1");
    if (p.min_neighbors < 1) throw std::invalid_argument("min_neighbors must be >= 1");
    if (p.min_size < std::max(c.base_w, c.base_h)) throw std::invalid_argument("min_size below base window");
    std::vector<double> scales;
    for (double s = static_cast<double>(p.min_size) / c.base_w;; s *= p.scale_factor) {
        long w = std::lround(c.base_w * s);
        long h = std::lround(c.base_h * s);
        if (w > width || h > height) break;
        scales.push_back(s);
    }
    return scales;
}

}  // namespace

HaarCascade load_cascade(const std::string& text) {
    HaarCascade c;
    bool have_header = false;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream fields(line);
        std::vector<std::string> tok{std::istream_iterator<std::string>(fields), std::istream_iterator<std::string>()};
        if (tok.empty()) continue;
        const auto& kw = tok[0];
        if (kw == "cascade") {
            if (have_header) parse_fail(line_no, "duplicate cascade header");
            if (tok.size() != 3) parse_fail(line_no, "cascade takes 2 arguments");
            c.base_w = parse_int(tok[1], line_no);
            c.base_h = parse_int(tok[2], line_no);
            have_header = true;
        } else if (!have_header) {
            parse_fail(line_no, "document must start with a cascade header");
        } else if (kw == "stage") {
            if (tok.size() != 2) parse_fail(line_no, "stage takes 1 argument");
            c.stages.push_back({{}, parse_number(tok[1], line_no)});
        } else if (kw == "feature") {
            if (tok.size() != 4) parse_fail(line_no, "feature takes 3 arguments");
            if (c.stages.empty()) parse_fail(line_no, "feature outside a stage");
            c.stages.back().features.push_back(
                {{}, parse_number(tok[1], line_no), parse_number(tok[2], line_no), parse_number(tok[3], line_no)});
        } else if (kw == "rect") {
            if (tok.size() != 6) parse_fail(line_no, "rect takes 5 arguments");
            if (c.stages.empty() || c.stages.back().features.empty()) parse_fail(line_no, "rect outside a feature");
            int x = parse_int(tok[1], line_no);
            int y = parse_int(tok[2], line_no);
            int w = parse_int(tok[3], line_no);
            int h = parse_int(tok[4], line_no);
            if (x < 0 || y < 0 || w < 1 || h < 1) parse_fail(line_no, "rect needs x,y >= 0 and w,h >= 1");
            c.stages.back().features.back().rects.push_back({Rect(x, y, w, h), parse_number(tok[5], line_no)});
        } else {
            parse_fail(line_no, "unknown keyword '" + kw + "'");
        }
    }
    if (!have_header) parse_fail(line_no, "missing cascade header");
    validate(c);
    return c;
}

HaarCascade load_cascade_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open cascade " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return load_cascade(ss.str());
}

double feature_value(const HaarFeature& f, const HaarCascade& c, const IntegralImage& ii,
                     const IntegralImage& sq_ii, const Rect& win) {
    check_window(c, ii, win);
    const double norm = static_cast<double>(win.area()) * window_stddev(ii, sq_ii, win);
    return scaled_value(scale_feature(f, c, win), ii, norm);
}

bool eval_window(const HaarCascade& c, const IntegralImage& ii, const IntegralImage& sq_ii, const Rect& win) {
    check_window(c, ii, win);
    const double norm = static_cast<double>(win.area()) * window_stddev(ii, sq_ii, win);
    for (const auto& stage : c.stages) {
        double score = 0;
        for (const auto& f : stage.features) {
            double v = scaled_value(scale_feature(f, c, win), ii, norm);
            score += v < f.threshold ? f.left_val : f.right_val;
        }
        if (score < stage.stage_threshold) return false;
    }
    return true;
}

std::vector<Rect> scan_windows(const HaarCascade& c, int width, int height, const DetectParams& params) {
    std::vector<Rect> out;
    const auto scales = window_scales(c, width, height, params);
    for (double s : scales) {
        const int w = static_cast<int>(std::lround(c.base_w * s));
        const int h = static_cast<int>(std::lround(c.base_h * s));
        // step is in pixels at min_size and grows with the pyramid level
        const int stride = std::max(1, static_cast<int>(std::lround(params.step * s / scales.front())));
        for (int y = 0; y + h <= height; y += stride)
            for (int x = 0; x + w <= width; x += stride) out.emplace_back(x, y, w, h);
    }
    return out;
}

std::vector<Rect> detect_raw(const HaarCascade& c, const GrayImage& img, const DetectParams& params) {
    const auto ii = imaging::integral_image(img);
    const auto sq = imaging::squared_integral_image(img);
    std::vector<Rect> hits;
    for (const auto& win : scan_windows(c, img.width(), img.height(), params))
        if (eval_window(c, ii, sq, win)) hits.push_back(win);
    return hits;
}

std::vector<Detection> detect_faces(const HaarCascade& c, const GrayImage& img, const DetectParams& params) {
    return group_rects(detect_raw(c, img, params), params.min_neighbors, params.group_eps);
}

std::vector<Detection> group_rects(const std::vector<Rect>& raw, int min_neighbors, double eps) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("group eps must be in (0,1)");
    const std::size_t n = raw.size();
    std::vector<std::size_t> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    auto similar = [eps](const Rect& a, const Rect& b) {
        const double mw = eps * (a.w() + b.w()) / 2.0;
        const double mh = eps * (a.h() + b.h()) / 2.0;
        return std::abs(a.x() - b.x()) <= mw && std::abs(a.y() - b.y()) <= mh && std::abs(a.w() - b.w()) <= mw &&
               std::abs(a.h() - b.h()) <= mh;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (similar(raw[i], raw[j])) {
                auto a = find(i), b = find(j);
                if (a != b) parent[std::max(a, b)] = std::min(a, b);
            }

    struct Acc {
        long long x = 0, y = 0, w = 0, h = 0;
        int count = 0;
    };
    std::vector<Acc> acc(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& a = acc[find(i)];
        a.x += raw[i].x();
        a.y += raw[i].y();
        a.w += raw[i].w();
        a.h += raw[i].h();
        ++a.count;
    }
    auto mean = [](long long sum, int count) {
        return static_cast<int>(std::floor(static_cast<double>(sum) / count + 0.5));
    };
    std::vector<Detection> out;
    for (const auto& a : acc) {
        if (a.count == 0 || a.count < min_neighbors) continue;
        out.push_back({Rect(mean(a.x, a.count), mean(a.y, a.count), mean(a.w, a.count), mean(a.h, a.count)),
                       a.count});
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        const auto& r = a.rect;
        const auto& s = b.rect;
        return std::make_tuple(r.y(), r.x(), r.w(), r.h(), a.neighbors) <
               std::make_tuple(s.y(), s.x(), s.w(), s.h(), b.neighbors);
    });
    return out;
}

}  // namespace diane::detect
