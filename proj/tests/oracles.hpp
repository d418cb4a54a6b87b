// Naive reference implementations used only by tests. These are written as
// direct formula transcriptions (double loops, no shared helpers with src/)
// so that agreement with the production code is meaningful evidence.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "zldc/core.hpp"
#include "zldc/rng.hpp"

namespace oracle {

// Percentile with linear interpolation at index p/100*(n-1), written
// independently of zldc::percentile_sorted.
double percentile(std::vector<double> values, double p);

std::vector<int> quantize(const zldc::Image& img, int levels);

struct Glcm {
    int levels = 0;
    std::vector<double> p;  // levels x levels, row-major
};
Glcm glcm_horizontal(const std::vector<int>& q, int rows, int cols, int levels);

// Haralick scalars straight from their textbook sums.
double glcm_asm(const Glcm& g);
double glcm_contrast(const Glcm& g);
double glcm_correlation(const Glcm& g);
double glcm_dissimilarity(const Glcm& g);
double glcm_energy(const Glcm& g);
double glcm_homogeneity(const Glcm& g);

// Tamura, recomputing every window mean by direct summation.
double tamura_coarseness(const zldc::Image& img);
double tamura_contrast(const zldc::Image& img);

double stat_p10(const zldc::Image& img);
double stat_mean(const zldc::Image& img);
double stat_skewness(const zldc::Image& img);
double stat_kurtosis_excess(const zldc::Image& img);

// All 13 per-modality features in canonical order.
std::array<double, 13> patch_features(const zldc::Image& img, int levels);

// Piecewise-linear interpolation through (x,y) knots by per-value linear
// segment scan, with first/last-segment extrapolation and clamping.
double piecewise_linear(const std::vector<double>& x, const std::vector<double>& y,
                        double v, double clamp_lo, double clamp_hi);

// Pairwise Mann-Whitney concordance, ties counted 1/2. O(n^2).
double concordance(const std::vector<double>& scores, const std::vector<int>& labels);

// Mixed absolute/relative agreement metric used by the oracle comparisons.
double rel_err(double got, double want);

// Test data helpers.
zldc::Image random_image(zldc::Rng& rng, int rows, int cols, double lo, double hi);
zldc::Patch random_patch(zldc::Rng& rng, zldc::Modality m, zldc::Zone z, int label,
                         const std::string& sample_id);

}  // namespace oracle
