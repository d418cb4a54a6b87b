#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "zldc/util.hpp"

namespace zldc {

// Prostate zones with their own classification pipelines. SV findings are
// excluded from the study and must be rejected wherever zone tokens are parsed.
enum class Zone { PZ, TZ, AS };

enum class Modality { T2W, ADC };

constexpr int kT2PatchSize = 16;
constexpr int kAdcPatchSize = 6;
constexpr int kFeatureCount = 26;

std::string zone_name(Zone z);
Zone parse_zone(std::string_view token);
std::string modality_name(Modality m);
Modality parse_modality(std::string_view token);
int patch_size(Modality m);

// Dense row-major grid of doubles; working representation for whole images.
struct Image {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Image() = default;
    Image(int r, int c, double fill = 0.0)
        : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return v.size(); }
    bool operator==(const Image&) const = default;
};

// A sampled window around one location. Pixels are stored as float32 (the
// container's on-disk precision) so save/load round-trips are bit exact.
struct Patch {
    std::vector<float> pixels;  // size*size row-major
    int size = 0;
    Modality modality = Modality::T2W;
    Zone zone = Zone::PZ;
    int label = 0;
    std::string case_id;
    std::string sample_id;

    float at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * size + c]; }
    bool operator==(const Patch&) const = default;
};

// Validates modality/size agreement, finite pixels and binary label.
Patch make_patch(std::vector<float> pixels, Modality modality, Zone zone, int label,
                 std::string case_id, std::string sample_id);

// T2 + ADC windows cut at the same anatomical location.
struct PairedSample {
    Patch t2;
    Patch adc;
    Zone zone = Zone::PZ;
    int label = 0;
    std::string sample_id;

    bool operator==(const PairedSample&) const = default;
};

PairedSample make_paired_sample(Patch t2, Patch adc);

// The 26 canonical feature values for one paired sample.
struct FeatureVector {
    std::array<double, kFeatureCount> values{};
    int label = 0;
    Zone zone = Zone::PZ;
    std::string sample_id;
};

// Canonical feature order: for each modality in [T2W, ADC], the 13 per-patch
// features [p10, mean, skewness, kurtosis, asm, contrast, correlation,
// dissimilarity, energy, homogeneity, tamura_coarseness, tamura_contrast,
// tamura_roughness]. feature_name is a bijection between 0..25 and the names.
const std::array<std::string, kFeatureCount>& feature_names();
const std::string& feature_name(int index);
int feature_index(std::string_view name);
// FNV-1a of the comma-joined canonical names; stored in model files and
// checked before prediction.
std::uint64_t feature_schema_hash();

enum class Split { Train, Test };
std::string split_name(Split s);
Split parse_split(std::string_view token);

// All paired samples of one zone and split. The sampler constructs these
// with exactly 3 negatives per positive.
struct ZoneDataset {
    Zone zone = Zone::PZ;
    Split split = Split::Train;
    std::vector<PairedSample> samples;

    bool operator==(const ZoneDataset&) const = default;
};

// Throws ValidationError if samples disagree on zone or any sample is malformed.
void validate_dataset(const ZoneDataset& ds);

// Flat on-disk container: manifest.json + patches_t2.bin (float32 LE,
// [N,16,16]) + patches_adc.bin ([N,6,6]) + labels.csv.
void save_dataset(const ZoneDataset& ds, const std::filesystem::path& dir);
ZoneDataset load_dataset(const std::filesystem::path& dir);

// Feature matrix CSV: header "sample_id,zone,label,<26 canonical names>".
void save_feature_csv(const std::vector<FeatureVector>& rows, const std::filesystem::path& path);
std::vector<FeatureVector> load_feature_csv(const std::filesystem::path& path);

}  // namespace zldc
