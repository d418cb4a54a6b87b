#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace oracle {

using zldc::Image;

double percentile(std::vector<double> values, double p) {
    std::sort(values.begin(), values.end());
    const double idx = p / 100.0 * double(values.size() - 1);
    const std::size_t lo = std::size_t(std::floor(idx));
    if (lo + 1 >= values.size()) return values.back();
    const double frac = idx - double(lo);
    return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

std::vector<int> quantize(const Image& img, int levels) {
    double mn = img.v[0], mx = img.v[0];
    for (double x : img.v) {
        mn = std::min(mn, x);
        mx = std::max(mx, x);
    }
    std::vector<int> q(img.v.size(), 0);
    if (mx == mn) return q;
    for (std::size_t i = 0; i < img.v.size(); ++i) {
        int level = int(std::floor((img.v[i] - mn) / (mx - mn) * levels));
        if (level > levels - 1) level = levels - 1;
        if (level < 0) level = 0;
        q[i] = level;
    }
    return q;
}

Glcm glcm_horizontal(const std::vector<int>& q, int rows, int cols, int levels) {
    Glcm g;
    g.levels = levels;
    g.p.assign(std::size_t(levels) * levels, 0.0);
    long pairs = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c + 1 < cols; ++c) {
            int a = q[std::size_t(r) * cols + c];
            int b = q[std::size_t(r) * cols + c + 1];
            g.p[std::size_t(a) * levels + b] += 1.0;
            ++pairs;
        }
    for (double& x : g.p) x /= double(pairs);
    return g;
}

double glcm_asm(const Glcm& g) {
    double s = 0;
    for (double x : g.p) s += x * x;
    return s;
}

double glcm_contrast(const Glcm& g) {
    double s = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j)
            s += double((i - j) * (i - j)) * g.p[std::size_t(i) * g.levels + j];
    return s;
}

double glcm_correlation(const Glcm& g) {
    double mu_i = 0, mu_j = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j) {
            double p = g.p[std::size_t(i) * g.levels + j];
            mu_i += i * p;
            mu_j += j * p;
        }
    double var_i = 0, var_j = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j) {
            double p = g.p[std::size_t(i) * g.levels + j];
            var_i += (i - mu_i) * (i - mu_i) * p;
            var_j += (j - mu_j) * (j - mu_j) * p;
        }
    double cov = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j)
            cov += (i - mu_i) * (j - mu_j) * g.p[std::size_t(i) * g.levels + j];
    double denom = std::sqrt(var_i) * std::sqrt(var_j);
    if (denom == 0.0) return 1.0;
    return cov / denom;
}

double glcm_dissimilarity(const Glcm& g) {
    double s = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j)
            s += std::abs(i - j) * g.p[std::size_t(i) * g.levels + j];
    return s;
}

double glcm_energy(const Glcm& g) { return std::sqrt(glcm_asm(g)); }

double glcm_homogeneity(const Glcm& g) {
    double s = 0;
    for (int i = 0; i < g.levels; ++i)
        for (int j = 0; j < g.levels; ++j)
            s += g.p[std::size_t(i) * g.levels + j] / (1.0 + double((i - j) * (i - j)));
    return s;
}

namespace {

// Mean over the 2^k x 2^k window whose top-left corner is (r, c), by direct
// summation.
double window_mean(const Image& img, int r, int c, int k) {
    const int w = 1 << k;
    double s = 0;
    for (int i = r; i < r + w; ++i)
        for (int j = c; j < c + w; ++j) s += img.v[std::size_t(i) * img.cols + j];
    return s / double(w * w);
}

}  // namespace

double tamura_coarseness(const Image& img) {
    const int rows = img.rows, cols = img.cols;
    const int min_dim = std::min(rows, cols);
    int k_max = 0;
    while ((1 << (k_max + 2)) <= min_dim) ++k_max;

    double total = 0;
    long count = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double best_e = -1;
            int best_k = 0;
            // window pairs share an edge at the pixel: horizontal pair has
            // top-left corners (r, c-s) and (r, c); vertical (r-s, c), (r, c).
            for (int k = 0; k <= k_max; ++k) {
                const int s = 1 << k;
                if (c - s >= 0 && c + s <= cols && r + s <= rows) {
                    double e = std::abs(window_mean(img, r, c, k) - window_mean(img, r, c - s, k));
                    if (e > best_e) {
                        best_e = e;
                        best_k = k;
                    }
                }
                if (r - s >= 0 && r + s <= rows && c + s <= cols) {
                    double e = std::abs(window_mean(img, r, c, k) - window_mean(img, r - s, c, k));
                    if (e > best_e) {
                        best_e = e;
                        best_k = k;
                    }
                }
            }
            if (best_e >= 0) {
                total += double(1 << best_k);
                ++count;
            }
        }
    if (count == 0) return 1.0;
    return total / double(count);
}

double tamura_contrast(const Image& img) {
    const double n = double(img.v.size());
    double mean = 0;
    for (double x : img.v) mean += x;
    mean /= n;
    double m2 = 0, m4 = 0;
    for (double x : img.v) {
        double d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    if (m2 == 0.0) return 0.0;
    double sigma = std::sqrt(m2);
    double alpha4 = m4 / (m2 * m2);
    return sigma / std::pow(alpha4, 0.25);
}

double stat_p10(const Image& img) { return percentile(img.v, 10.0); }

double stat_mean(const Image& img) {
    double s = 0;
    for (double x : img.v) s += x;
    return s / double(img.v.size());
}

double stat_skewness(const Image& img) {
    const double n = double(img.v.size());
    const double mean = stat_mean(img);
    double m2 = 0, m3 = 0;
    for (double x : img.v) {
        double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if (m2 == 0.0) return 0.0;
    return m3 / std::pow(m2, 1.5);
}

double stat_kurtosis_excess(const Image& img) {
    const double n = double(img.v.size());
    const double mean = stat_mean(img);
    double m2 = 0, m4 = 0;
    for (double x : img.v) {
        double d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    if (m2 == 0.0) return 0.0;
    return m4 / (m2 * m2) - 3.0;
}

std::array<double, 13> patch_features(const Image& img, int levels) {
    auto q = quantize(img, levels);
    auto g = glcm_horizontal(q, img.rows, img.cols, levels);
    return {
        stat_p10(img),
        stat_mean(img),
        stat_skewness(img),
        stat_kurtosis_excess(img),
        glcm_asm(g),
        glcm_contrast(g),
        glcm_correlation(g),
        glcm_dissimilarity(g),
        glcm_energy(g),
        glcm_homogeneity(g),
        tamura_coarseness(img),
        tamura_contrast(img),
        tamura_coarseness(img) + tamura_contrast(img),
    };
}

double piecewise_linear(const std::vector<double>& x, const std::vector<double>& y,
                        double v, double clamp_lo, double clamp_hi) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("bad knots");
    // pick the segment by linear scan; for v past the ends, the nearest
    // positive-width segment.
    int seg = -1;
    if (v <= x.front()) {
        for (std::size_t j = 0; j + 1 < x.size(); ++j)
            if (x[j] < x[j + 1]) {
                seg = int(j);
                break;
            }
    } else if (v >= x.back()) {
        for (std::size_t j = x.size() - 1; j-- > 0;)
            if (x[j] < x[j + 1]) {
                seg = int(j);
                break;
            }
    } else {
        // interior: the unique j with x[j] <= v < x[j+1] (positive width by
        // construction since v < x.back())
        for (std::size_t j = 0; j + 1 < x.size(); ++j)
            if (x[j] <= v && v < x[j + 1]) {
                seg = int(j);
                break;
            }
    }
    if (seg < 0) throw std::invalid_argument("degenerate knots");
    double t = (v - x[seg]) / (x[seg + 1] - x[seg]);
    double out = y[seg] + t * (y[seg + 1] - y[seg]);
    return std::min(std::max(out, clamp_lo), clamp_hi);
}

double concordance(const std::vector<double>& scores, const std::vector<int>& labels) {
    double num = 0;
    long pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j) {
            if (labels[i] != 1 || labels[j] != 0) continue;
            ++pairs;
            if (scores[i] > scores[j])
                num += 1.0;
            else if (scores[i] == scores[j])
                num += 0.5;
        }
    if (pairs == 0) throw std::invalid_argument("need both classes");
    return num / double(pairs);
}

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

Image random_image(zldc::Rng& rng, int rows, int cols, double lo, double hi) {
    Image img;
    img.rows = rows;
    img.cols = cols;
    img.v.resize(std::size_t(rows) * cols);
    for (double& x : img.v) x = rng.uniform(lo, hi);
    return img;
}

zldc::Patch random_patch(zldc::Rng& rng, zldc::Modality m, zldc::Zone z, int label,
                         const std::string& sample_id) {
    const int n = zldc::patch_size(m);
    std::vector<float> px(std::size_t(n) * n);
    for (float& x : px) x = float(rng.uniform(0.0, 1000.0));
    return zldc::make_patch(std::move(px), m, z, label, "case", sample_id);
}

}  // namespace oracle
