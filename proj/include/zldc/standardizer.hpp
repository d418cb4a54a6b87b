#pragma once

#include <vector>

#include "zldc/core.hpp"

namespace zldc {
namespace standardize {

// Landmark standardization settings. The classical defaults: cutoffs at the
// 1st/99th percentiles, decile landmarks, standard scale [0, 4095].
struct StandardizationConfig {
    double cutoff_low = 1.0;
    double cutoff_high = 99.0;
    std::vector<double> landmark_percentiles = {10, 20, 30, 40, 50, 60, 70, 80, 90};
    double s_min = 0.0;
    double s_max = 4095.0;
};

void validate_config(const StandardizationConfig& cfg);

// Per-landmark means on the standard scale, learned from a training corpus.
struct StandardizationModel {
    StandardizationConfig config;
    std::vector<double> mean_landmarks;  // non-decreasing, within [s_min, s_max]

    bool operator==(const StandardizationModel&) const = default;
};

// For each image, maps [p_low, p_high] linearly onto [s_min, s_max], pushes
// the image's landmark percentiles through that map, and averages per landmark.
StandardizationModel fit_standardizer(const std::vector<Image>& images,
                                      const StandardizationConfig& cfg = {});

// Piecewise-linear map through (image percentile, model landmark) knots.
// Outside the cutoffs the first/last segment extrapolates, then values are
// clamped to [s_min - 0.1*range, s_max + 0.1*range].
Image apply_standardizer(const StandardizationModel& model, const Image& image);

}  // namespace standardize
}  // namespace zldc
