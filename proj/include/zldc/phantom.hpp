#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zldc/sampler.hpp"

namespace zldc {
namespace phantom {

// Zone placement as fractions of the image extent, identical for both
// modality grids.
struct ZoneRect {
    double r0, r1, c0, c1;
};

struct PhantomConfig {
    int t2_rows = 128, t2_cols = 128;
    int adc_rows = 48, adc_cols = 48;
    // lesion contrast: the mean intensity dip over the lesion core, in
    // multiples of the zone's effective background std
    double delta = 1.0;
    // extra smooth-field variance per zone, as a multiple of the base noise
    // std; the transition zone is the most heterogeneous tissue
    std::map<Zone, double> heterogeneity = {
        {Zone::PZ, 0.4}, {Zone::TZ, 1.0}, {Zone::AS, 0.6}};
    // lesioned cases (one finding each) per zone per split
    std::map<Split, std::map<Zone, int>> counts = {
        {Split::Train, {{Zone::PZ, 24}, {Zone::TZ, 12}, {Zone::AS, 8}}},
        {Split::Test, {{Zone::PZ, 12}, {Zone::TZ, 6}, {Zone::AS, 4}}}};
    // cases with no findings at all, per split
    std::map<Split, int> clean_cases = {{Split::Train, 6}, {Split::Test, 3}};
    std::uint64_t seed = 0;
    std::map<Zone, ZoneRect> zone_rects = {
        {Zone::AS, {0.125, 0.3125, 0.1875, 0.8125}},
        {Zone::TZ, {0.375, 0.625, 0.1875, 0.8125}},
        {Zone::PZ, {0.6875, 0.875, 0.1875, 0.8125}}};
};

void validate_phantom_config(const PhantomConfig& cfg);

PhantomConfig phantom_config_from_json(const nlohmann::json& j);
nlohmann::json phantom_config_to_json(const PhantomConfig& cfg);

struct PhantomCorpus {
    std::vector<sampler::CaseImage> train, test;
};

// Deterministic in (config, seed); every case is generated on its own derived
// stream, so worker count and case order cannot change the output.
PhantomCorpus generate_corpus(const PhantomConfig& cfg, int workers = 1);

// Writes <dir>/train and <dir>/test in the sampler's corpus layout.
void save_phantom_corpus(const PhantomCorpus& corpus, const std::string& dir);

}  // namespace phantom
}  // namespace zldc
