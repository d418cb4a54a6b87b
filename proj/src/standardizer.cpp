#include "zldc/standardizer.hpp"

#include <algorithm>
#include <cmath>

#include "zldc/util.hpp"

namespace zldc {
namespace standardize {

void validate_config(const StandardizationConfig& cfg) {
    if (!(cfg.cutoff_low >= 0.0 && cfg.cutoff_low < cfg.cutoff_high && cfg.cutoff_high <= 100.0))
        throw ValidationError("cutoffs must satisfy 0 <= low < high <= 100");
    if (!(cfg.s_min < cfg.s_max))
        throw ValidationError("standard scale must satisfy s_min < s_max");
    if (cfg.landmark_percentiles.empty())
        throw ValidationError("landmark percentiles must be non-empty");
    double prev = cfg.cutoff_low;
    for (double p : cfg.landmark_percentiles) {
        if (!(p > prev))
            throw ValidationError("landmark percentiles must be strictly increasing within the cutoffs");
        prev = p;
    }
    if (!(prev < cfg.cutoff_high))
        throw ValidationError("landmark percentiles must be strictly increasing within the cutoffs");
}

namespace {

// Sorted pixel values; shared by fit and apply.
std::vector<double> sorted_pixels(const Image& img) {
    if (img.rows <= 0 || img.cols <= 0 || img.v.empty())
        throw ValidationError("image must be non-empty");
    for (double x : img.v)
        if (!std::isfinite(x)) throw ValidationError("image contains non-finite values");
    std::vector<double> s = img.v;
    std::sort(s.begin(), s.end());
    return s;
}

// Percentiles of one image at [cutoff_low, landmarks..., cutoff_high].
std::vector<double> knot_percentiles(const std::vector<double>& sorted,
                                     const StandardizationConfig& cfg) {
    std::vector<double> q;
    q.reserve(cfg.landmark_percentiles.size() + 2);
    q.push_back(percentile_sorted(sorted, cfg.cutoff_low));
    for (double p : cfg.landmark_percentiles) q.push_back(percentile_sorted(sorted, p));
    q.push_back(percentile_sorted(sorted, cfg.cutoff_high));
    return q;
}

}  // namespace

StandardizationModel fit_standardizer(const std::vector<Image>& images,
                                      const StandardizationConfig& cfg) {
    validate_config(cfg);
    if (images.empty()) throw ValidationError("fit requires at least one image");

    const size_t n_land = cfg.landmark_percentiles.size();
    std::vector<double> acc(n_land, 0.0);
    for (const Image& img : images) {
        auto s = sorted_pixels(img);
        auto q = knot_percentiles(s, cfg);
        const double p_low = q.front(), p_high = q.back();
        if (!(p_low < p_high))
            throw ValidationError("image percentile range is degenerate; cannot fit a linear map");
        const double scale = (cfg.s_max - cfg.s_min) / (p_high - p_low);
        for (size_t i = 0; i < n_land; ++i)
            acc[i] += cfg.s_min + (q[i + 1] - p_low) * scale;
    }

    StandardizationModel model;
    model.config = cfg;
    model.mean_landmarks.resize(n_land);
    for (size_t i = 0; i < n_land; ++i) model.mean_landmarks[i] = acc[i] / double(images.size());

    // Averaging monotone sequences is monotone, and each mapped landmark lies
    // in [s_min, s_max] by construction; enforce against rounding drift.
    for (size_t i = 0; i < n_land; ++i) {
        model.mean_landmarks[i] = std::clamp(model.mean_landmarks[i], cfg.s_min, cfg.s_max);
        if (i > 0 && model.mean_landmarks[i] < model.mean_landmarks[i - 1])
            model.mean_landmarks[i] = model.mean_landmarks[i - 1];
    }
    return model;
}

Image apply_standardizer(const StandardizationModel& model, const Image& image) {
    const StandardizationConfig& cfg = model.config;
    validate_config(cfg);
    if (model.mean_landmarks.size() != cfg.landmark_percentiles.size())
        throw ValidationError("model landmark count does not match its config");
    for (size_t i = 0; i < model.mean_landmarks.size(); ++i) {
        double m = model.mean_landmarks[i];
        if (!(m >= cfg.s_min && m <= cfg.s_max))
            throw ValidationError("model landmarks must lie within the standard scale");
        if (i > 0 && m < model.mean_landmarks[i - 1])
            throw ValidationError("model landmarks must be non-decreasing");
    }

    auto s = sorted_pixels(image);
    std::vector<double> x = knot_percentiles(s, cfg);  // knots in image space
    std::vector<double> y;                             // targets on the standard scale
    y.reserve(x.size());
    y.push_back(cfg.s_min);
    for (double m : model.mean_landmarks) y.push_back(m);
    y.push_back(cfg.s_max);
    const size_t n = x.size();
    if (!(x.front() < x.back()))
        throw ValidationError("image percentile range is degenerate; cannot apply a linear map");

    // First and last segment with positive width, for extrapolation and for
    // stepping over zero-width interior segments.
    size_t first_seg = 0;
    while (first_seg + 1 < n && !(x[first_seg] < x[first_seg + 1])) ++first_seg;
    size_t last_seg = n - 2;
    while (last_seg > 0 && !(x[last_seg] < x[last_seg + 1])) --last_seg;

    auto slope = [&](size_t j) { return (y[j + 1] - y[j]) / (x[j + 1] - x[j]); };

    const double range = cfg.s_max - cfg.s_min;
    const double lo = cfg.s_min - 0.1 * range;
    const double hi = cfg.s_max + 0.1 * range;

    Image out;
    out.rows = image.rows;
    out.cols = image.cols;
    out.v.resize(image.v.size());
    for (size_t k = 0; k < image.v.size(); ++k) {
        const double v = image.v[k];
        double mapped;
        if (v <= x.front()) {
            mapped = y[first_seg] + (v - x[first_seg]) * slope(first_seg);
        } else if (v >= x.back()) {
            mapped = y[last_seg] + (v - x[last_seg]) * slope(last_seg);
        } else {
            // Largest j with x[j] <= v; skips zero-width segments, so the
            // segment used always has positive width.
            size_t j = size_t(std::upper_bound(x.begin(), x.end(), v) - x.begin()) - 1;
            while (!(x[j] < x[j + 1])) --j;  // v > x[j] guarantees a stop
            mapped = y[j] + (v - x[j]) * slope(j);
        }
        out.v[k] = std::clamp(mapped, lo, hi);
    }
    return out;
}

}  // namespace standardize
}  // namespace zldc
