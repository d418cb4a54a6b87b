#pragma once

#include <array>
#include <vector>

#include "zldc/core.hpp"

namespace zldc {
namespace texture {

constexpr int kT2QuantLevels = 32;
constexpr int kAdcQuantLevels = 16;

// Normalized co-occurrence distribution of horizontal neighbor pairs
// (offset dx=1, dy=0, single direction, not symmetrized).
struct GlcmMatrix {
    int levels = 0;
    std::vector<double> p;  // levels*levels, row-major: p[i*levels+j]
    double mu_x = 0.0, mu_y = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0;

    double at(int i, int j) const { return p[static_cast<std::size_t>(i) * levels + j]; }
};

struct HaralickFeatures {
    double angular_second_moment = 0.0;
    double contrast = 0.0;
    double correlation = 0.0;
    double dissimilarity = 0.0;
    double energy = 0.0;
    double homogeneity = 0.0;
};

struct TamuraFeatures {
    double coarseness = 0.0;
    double contrast = 0.0;
    double roughness = 0.0;
};

struct DistributionStats {
    double p10 = 0.0;
    double mean = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess kurtosis
};

// Central moments of a pixel sample; alpha4 = mu4 / stddev^4.
struct MomentSummary {
    double mean = 0.0;
    double stddev = 0.0;
    double mu4 = 0.0;
    double alpha4 = 0.0;
};

MomentSummary moment_summary(const std::vector<double>& values);

// Per-patch min-max binning into {0..levels-1}; a constant patch maps to all 0.
std::vector<int> quantize_patch(const Image& patch, int levels);

GlcmMatrix compute_glcm(const std::vector<int>& quantized, int rows, int cols, int levels);

HaralickFeatures haralick_features(const GlcmMatrix& glcm);

TamuraFeatures tamura_features(const Image& patch);

DistributionStats distribution_stats(const Image& patch);

// The 13 canonical per-patch features, in canonical order.
std::array<double, 13> patch_features(const Image& patch, int quant_levels);

Image patch_image(const Patch& p);

FeatureVector extract_features(const PairedSample& sample);

// Batch extraction in sample order; output is identical for any worker count.
std::vector<FeatureVector> extract_features_batch(const ZoneDataset& ds, unsigned workers = 1);

}  // namespace texture
}  // namespace zldc
