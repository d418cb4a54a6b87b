#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "zldc/core.hpp"
#include "zldc/rng.hpp"

namespace zldc {
namespace sampler {

struct Mask {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> m;  // row-major, 0/1

    bool at(int r, int c) const { return m[std::size_t(r) * cols + c] != 0; }
    void set(int r, int c, bool v) { m[std::size_t(r) * cols + c] = v ? 1 : 0; }
    long count() const {
        long n = 0;
        for (auto x : m) n += x;
        return n;
    }
};

Mask make_mask(int rows, int cols);

// One radiologist-style finding: the same anatomical location expressed in
// both modality grids.
struct Finding {
    Zone zone = Zone::PZ;
    int t2_row = 0, t2_col = 0;
    int adc_row = 0, adc_col = 0;
};

struct CaseImage {
    std::string case_id;
    Image t2, adc;
    std::map<Zone, Mask> t2_masks, adc_masks;
    std::vector<Finding> findings;
};

void validate_case(const CaseImage& c);

struct SamplerConfig {
    int t2_patch = kT2PatchSize;
    int adc_patch = kAdcPatchSize;
    int neg_per_pos = 3;
    std::uint64_t seed = 0;
    // L-infinity exclusion radius around positive centroids, per modality;
    // half the patch size guarantees zero window overlap with a centroid.
    int t2_exclusion = kT2PatchSize / 2;
    int adc_exclusion = kAdcPatchSize / 2;
};

void validate_sampler_config(const SamplerConfig& cfg);

// Maps a T2-grid center to the ADC grid by proportional position.
std::pair<int, int> map_center(int r, int c, int t2_rows, int t2_cols, int adc_rows,
                               int adc_cols);

// The size x size sub-grid whose top-left corner is center - size/2. No
// resampling; throws if the window leaves the image.
Image extract_patch(const Image& image, int center_row, int center_col, int size);

// T2 centers (row-major order) from which a negative may be drawn: inside the
// zone mask, both modality windows fit, mapped ADC center inside the ADC zone
// mask, and outside every finding's exclusion radius in both grids.
std::vector<std::pair<int, int>> admissible_centers(const CaseImage& c, Zone zone,
                                                    const SamplerConfig& cfg);

// Draws `count` negative centers uniformly without replacement and cuts the
// paired patches. Sample ids are "<case_id>:neg<i>" in draw order.
std::vector<PairedSample> sample_negatives(const CaseImage& c, Zone zone,
                                           const SamplerConfig& cfg, Rng& rng, int count);

// Positives at every finding of the zone plus neg_per_pos negatives per
// positive, drawn first from cases without findings in this zone.
ZoneDataset build_zone_dataset(const std::vector<CaseImage>& cases, Zone zone,
                               const SamplerConfig& cfg, Split split = Split::Train,
                               int workers = 1);

// Corpus directory layout: one subdirectory per case holding t2.bin/adc.bin
// (float32 LE row-major) with JSON shape sidecars, masks.json (run-length
// encoded per modality and zone) and findings.csv.
void save_corpus(const std::vector<CaseImage>& cases, const std::string& dir);
std::vector<CaseImage> load_corpus(const std::string& dir);

// Row-major RLE of set pixels as (start, length) pairs; helpers shared with
// tests.
std::vector<std::pair<long, long>> mask_to_rle(const Mask& mask);
Mask rle_from_runs(int rows, int cols, const std::vector<std::pair<long, long>>& runs);

}  // namespace sampler
}  // namespace zldc
