#include "zldc/texture.hpp"

#include <algorithm>
#include <cmath>

namespace zldc {
namespace texture {

MomentSummary moment_summary(const std::vector<double>& values) {
    MomentSummary m;
    if (values.empty()) return m;
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (double v : values) sum += v;
    m.mean = sum / n;
    double s2 = 0.0, s4 = 0.0;
    for (double v : values) {
        const double d = v - m.mean;
        const double d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    const double var = s2 / n;
    m.stddev = std::sqrt(var);
    m.mu4 = s4 / n;
    m.alpha4 = m.stddev > 0.0 ? m.mu4 / (var * var) : 0.0;
    return m;
}

std::vector<int> quantize_patch(const Image& patch, int levels) {
    if (levels < 2) throw ValidationError("quantization needs at least 2 levels");
    if (patch.v.empty()) throw ValidationError("empty patch");
    const auto [mn_it, mx_it] = std::minmax_element(patch.v.begin(), patch.v.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<int> out(patch.v.size(), 0);
    if (mx == mn) return out;
    const double scale = static_cast<double>(levels) / (mx - mn);
    for (std::size_t i = 0; i < patch.v.size(); ++i) {
        int q = static_cast<int>((patch.v[i] - mn) * scale);
        if (q >= levels) q = levels - 1;
        out[i] = q;
    }
    return out;
}

GlcmMatrix compute_glcm(const std::vector<int>& quantized, int rows, int cols, int levels) {
    if (cols < 2) throw ValidationError("GLCM needs width >= 2");
    if (quantized.size() != static_cast<std::size_t>(rows) * cols)
        throw ValidationError("quantized grid size mismatch");

    GlcmMatrix g;
    g.levels = levels;
    g.p.assign(static_cast<std::size_t>(levels) * levels, 0.0);

    std::vector<std::int64_t> counts(g.p.size(), 0);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c + 1 < cols; ++c) {
            const int a = quantized[static_cast<std::size_t>(r) * cols + c];
            const int b = quantized[static_cast<std::size_t>(r) * cols + c + 1];
            if (a < 0 || a >= levels || b < 0 || b >= levels)
                throw ValidationError("quantized value out of level range");
            ++counts[static_cast<std::size_t>(a) * levels + b];
        }
    const double total = static_cast<double>(rows) * (cols - 1);
    for (std::size_t i = 0; i < counts.size(); ++i)
        g.p[i] = static_cast<double>(counts[i]) / total;

    std::vector<double> px(levels, 0.0), py(levels, 0.0);
    for (int i = 0; i < levels; ++i)
        for (int j = 0; j < levels; ++j) {
            px[i] += g.at(i, j);
            py[j] += g.at(i, j);
        }
    for (int i = 0; i < levels; ++i) {
        g.mu_x += i * px[i];
        g.mu_y += i * py[i];
    }
    double vx = 0.0, vy = 0.0;
    for (int i = 0; i < levels; ++i) {
        vx += (i - g.mu_x) * (i - g.mu_x) * px[i];
        vy += (i - g.mu_y) * (i - g.mu_y) * py[i];
    }
    g.sigma_x = std::sqrt(vx);
    g.sigma_y = std::sqrt(vy);
    return g;
}

HaralickFeatures haralick_features(const GlcmMatrix& glcm) {
    HaralickFeatures f;
    const int L = glcm.levels;
    double asm_sum = 0.0, cross = 0.0;
    for (int i = 0; i < L; ++i)
        for (int j = 0; j < L; ++j) {
            const double p = glcm.at(i, j);
            if (p == 0.0) continue;
            const double d = static_cast<double>(i - j);
            asm_sum += p * p;
            f.contrast += d * d * p;
            f.dissimilarity += std::abs(d) * p;
            f.homogeneity += p / (1.0 + d * d);
            cross += static_cast<double>(i) * j * p;
        }
    f.energy = std::sqrt(asm_sum);
    // ASM is materialized as energy^2 so the pair satisfies its defining
    // identity bit-for-bit; this stays within 1 ulp of the direct sum.
    f.angular_second_moment = f.energy * f.energy;
    const double denom = glcm.sigma_x * glcm.sigma_y;
    f.correlation = denom == 0.0 ? 1.0 : (cross - glcm.mu_x * glcm.mu_y) / denom;
    return f;
}

namespace {

// Inclusive-exclusive prefix sums: S(r,c) = sum of pixels above-left of (r,c).
std::vector<double> prefix_sums(const Image& img) {
    const int R = img.rows, C = img.cols;
    std::vector<double> s(static_cast<std::size_t>(R + 1) * (C + 1), 0.0);
    auto at = [&](int r, int c) -> double& { return s[static_cast<std::size_t>(r) * (C + 1) + c]; };
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            at(r + 1, c + 1) = img.at(r, c) + at(r, c + 1) + at(r + 1, c) - at(r, c);
    return s;
}

}  // namespace

TamuraFeatures tamura_features(const Image& patch) {
    const int R = patch.rows, C = patch.cols;
    if (R < 2 || C < 2) throw ValidationError("Tamura features need a patch of at least 2x2");

    TamuraFeatures f;

    // Coarseness: window means A_k over 2^k x 2^k windows; at each pixel the
    // difference between the adjacent window ending at the pixel and the one
    // starting at it (horizontally and vertically); the best k maximizes the
    // difference, ties resolved to the smallest k.
    const int min_dim = std::min(R, C);
    int k_max = 0;
    while ((1 << (k_max + 2)) <= min_dim) ++k_max;  // largest k with 2^(k+1) <= min_dim

    const auto S = prefix_sums(patch);
    auto window_mean = [&](int r, int c, int s) {
        const auto idx = [&](int rr, int cc) {
            return S[static_cast<std::size_t>(rr) * (C + 1) + cc];
        };
        const double sum = idx(r + s, c + s) - idx(r, c + s) - idx(r + s, c) + idx(r, c);
        return sum / (static_cast<double>(s) * s);
    };

    double coarse_sum = 0.0;
    long contributing = 0;
    for (int r = 0; r < R; ++r) {
        for (int c = 0; c < C; ++c) {
            double best_e = -1.0;
            int best_k = 0;
            for (int k = 0; k <= k_max; ++k) {
                const int s = 1 << k;
                if (c - s >= 0 && c + s <= C && r + s <= R) {
                    const double e = std::abs(window_mean(r, c, s) - window_mean(r, c - s, s));
                    if (e > best_e) {
                        best_e = e;
                        best_k = k;
                    }
                }
                if (r - s >= 0 && r + s <= R && c + s <= C) {
                    const double e = std::abs(window_mean(r, c, s) - window_mean(r - s, c, s));
                    if (e > best_e) {
                        best_e = e;
                        best_k = k;
                    }
                }
            }
            if (best_e >= 0.0) {
                coarse_sum += static_cast<double>(1 << best_k);
                ++contributing;
            }
        }
    }
    f.coarseness = contributing > 0 ? coarse_sum / static_cast<double>(contributing) : 1.0;

    const MomentSummary m = moment_summary(patch.v);
    f.contrast = m.stddev > 0.0 ? m.stddev / std::pow(m.alpha4, 0.25) : 0.0;
    f.roughness = f.coarseness + f.contrast;
    return f;
}

DistributionStats distribution_stats(const Image& patch) {
    if (patch.v.size() < 2) throw ValidationError("distribution stats need at least 2 pixels");
    DistributionStats d;
    std::vector<double> sorted = patch.v;
    std::sort(sorted.begin(), sorted.end());
    d.p10 = percentile_sorted(sorted, 10.0);

    const double n = static_cast<double>(patch.v.size());
    double sum = 0.0;
    for (double v : patch.v) sum += v;
    d.mean = sum / n;
    double s2 = 0.0, s3 = 0.0, s4 = 0.0;
    for (double v : patch.v) {
        const double e = v - d.mean;
        const double e2 = e * e;
        s2 += e2;
        s3 += e2 * e;
        s4 += e2 * e2;
    }
    const double var = s2 / n;
    if (var > 0.0) {
        const double sd = std::sqrt(var);
        d.skewness = (s3 / n) / (sd * sd * sd);
        d.kurtosis = (s4 / n) / (var * var) - 3.0;
    }
    return d;
}

std::array<double, 13> patch_features(const Image& patch, int quant_levels) {
    const DistributionStats d = distribution_stats(patch);
    const auto q = quantize_patch(patch, quant_levels);
    const GlcmMatrix g = compute_glcm(q, patch.rows, patch.cols, quant_levels);
    const HaralickFeatures h = haralick_features(g);
    const TamuraFeatures t = tamura_features(patch);
    return {d.p10,           d.mean,     d.skewness,   d.kurtosis,      h.angular_second_moment,
            h.contrast,      h.correlation, h.dissimilarity, h.energy, h.homogeneity,
            t.coarseness,    t.contrast, t.roughness};
}

Image patch_image(const Patch& p) {
    Image img(p.size, p.size);
    for (std::size_t i = 0; i < p.pixels.size(); ++i) img.v[i] = static_cast<double>(p.pixels[i]);
    return img;
}

FeatureVector extract_features(const PairedSample& sample) {
    FeatureVector fv;
    fv.label = sample.label;
    fv.zone = sample.zone;
    fv.sample_id = sample.sample_id;
    const auto t2 = patch_features(patch_image(sample.t2), kT2QuantLevels);
    const auto adc = patch_features(patch_image(sample.adc), kAdcQuantLevels);
    for (int i = 0; i < 13; ++i) {
        fv.values[static_cast<std::size_t>(i)] = t2[static_cast<std::size_t>(i)];
        fv.values[static_cast<std::size_t>(13 + i)] = adc[static_cast<std::size_t>(i)];
    }
    for (double v : fv.values)
        if (!std::isfinite(v)) throw ComputeError("non-finite feature for sample " + sample.sample_id);
    return fv;
}

std::vector<FeatureVector> extract_features_batch(const ZoneDataset& ds, unsigned workers) {
    std::vector<FeatureVector> out(ds.samples.size());
    parallel_for(ds.samples.size(), workers,
                 [&](std::size_t i) { out[i] = extract_features(ds.samples[i]); });
    return out;
}

}  // namespace texture
}  // namespace zldc
