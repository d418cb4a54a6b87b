#include "zldc/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include <json.hpp>

namespace zldc {

using nlohmann::json;
namespace fs = std::filesystem;

std::string zone_name(Zone z) {
    switch (z) {
        case Zone::PZ: return "PZ";
        case Zone::TZ: return "TZ";
        case Zone::AS: return "AS";
    }
    throw ComputeError("bad zone value");
}

Zone parse_zone(std::string_view token) {
    if (token == "PZ") return Zone::PZ;
    if (token == "TZ") return Zone::TZ;
    if (token == "AS") return Zone::AS;
    if (token == "SV")
        throw ValidationError("zone 'SV' is excluded and cannot be used");
    throw ValidationError("unknown zone token: '" + std::string(token) + "'");
}

std::string modality_name(Modality m) {
    return m == Modality::T2W ? "T2W" : "ADC";
}

Modality parse_modality(std::string_view token) {
    if (token == "T2W") return Modality::T2W;
    if (token == "ADC") return Modality::ADC;
    throw ValidationError("unknown modality token: '" + std::string(token) + "'");
}

int patch_size(Modality m) {
    return m == Modality::T2W ? kT2PatchSize : kAdcPatchSize;
}

Patch make_patch(std::vector<float> pixels, Modality modality, Zone zone, int label,
                 std::string case_id, std::string sample_id) {
    const int size = patch_size(modality);
    if (pixels.size() != static_cast<std::size_t>(size) * size)
        throw ValidationError("patch pixel count does not match modality " +
                              modality_name(modality));
    for (float p : pixels)
        if (!std::isfinite(p)) throw ValidationError("non-finite patch pixel");
    if (label != 0 && label != 1) throw ValidationError("patch label must be 0 or 1");
    Patch out;
    out.pixels = std::move(pixels);
    out.size = size;
    out.modality = modality;
    out.zone = zone;
    out.label = label;
    out.case_id = std::move(case_id);
    out.sample_id = std::move(sample_id);
    return out;
}

PairedSample make_paired_sample(Patch t2, Patch adc) {
    if (t2.modality != Modality::T2W || adc.modality != Modality::ADC)
        throw ValidationError("paired sample requires a T2W and an ADC patch");
    if (t2.zone != adc.zone || t2.label != adc.label || t2.case_id != adc.case_id ||
        t2.sample_id != adc.sample_id)
        throw ValidationError("paired patches disagree on zone/label/case/sample");
    PairedSample s;
    s.zone = t2.zone;
    s.label = t2.label;
    s.sample_id = t2.sample_id;
    s.t2 = std::move(t2);
    s.adc = std::move(adc);
    return s;
}

namespace {

std::array<std::string, kFeatureCount> build_feature_names() {
    static const char* base[13] = {"p10",           "mean",          "skewness",
                                   "kurtosis",      "asm",           "contrast",
                                   "correlation",   "dissimilarity", "energy",
                                   "homogeneity",   "tamura_coarseness",
                                   "tamura_contrast", "tamura_roughness"};
    std::array<std::string, kFeatureCount> names;
    for (int m = 0; m < 2; ++m) {
        const std::string prefix = m == 0 ? "t2_" : "adc_";
        for (int f = 0; f < 13; ++f) names[m * 13 + f] = prefix + base[f];
    }
    return names;
}

}  // namespace

const std::array<std::string, kFeatureCount>& feature_names() {
    static const auto names = build_feature_names();
    return names;
}

const std::string& feature_name(int index) {
    if (index < 0 || index >= kFeatureCount)
        throw ValidationError("feature index out of range: " + std::to_string(index));
    return feature_names()[static_cast<std::size_t>(index)];
}

int feature_index(std::string_view name) {
    const auto& names = feature_names();
    for (int i = 0; i < kFeatureCount; ++i)
        if (names[static_cast<std::size_t>(i)] == name) return i;
    throw ValidationError("unknown feature name: '" + std::string(name) + "'");
}

std::uint64_t feature_schema_hash() {
    std::string joined;
    for (const auto& n : feature_names()) {
        if (!joined.empty()) joined += ',';
        joined += n;
    }
    return fnv1a64(joined);
}

std::string split_name(Split s) {
    return s == Split::Train ? "train" : "test";
}

Split parse_split(std::string_view token) {
    if (token == "train") return Split::Train;
    if (token == "test") return Split::Test;
    throw ValidationError("unknown split token: '" + std::string(token) + "'");
}

void validate_dataset(const ZoneDataset& ds) {
    for (const auto& s : ds.samples) {
        if (s.zone != ds.zone)
            throw ValidationError("sample zone differs from dataset zone");
        if (s.t2.size != kT2PatchSize || s.adc.size != kAdcPatchSize)
            throw ValidationError("sample patch dimensions are wrong");
        if (s.label != s.t2.label || s.label != s.adc.label)
            throw ValidationError("sample label disagrees with patch labels");
    }
}

namespace {

void write_patch_tensor(const fs::path& path, const std::vector<PairedSample>& samples,
                        Modality m) {
    const int size = patch_size(m);
    std::vector<std::uint8_t> bytes;
    bytes.reserve(samples.size() * static_cast<std::size_t>(size) * size * 4);
    for (const auto& s : samples) {
        const Patch& p = m == Modality::T2W ? s.t2 : s.adc;
        const auto* raw = reinterpret_cast<const std::uint8_t*>(p.pixels.data());
        bytes.insert(bytes.end(), raw, raw + p.pixels.size() * 4);
    }
    write_file_bytes(path, bytes);
}

std::vector<std::vector<float>> read_patch_tensor(const fs::path& path, std::size_t n, int size) {
    auto bytes = read_file_bytes(path);
    const std::size_t per = static_cast<std::size_t>(size) * size * 4;
    if (bytes.size() != n * per)
        throw ValidationError("tensor size mismatch in " + path.string() + ": manifest says " +
                              std::to_string(n) + " patches, file holds " +
                              std::to_string(bytes.size() / (per ? per : 1)));
    std::vector<std::vector<float>> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].resize(static_cast<std::size_t>(size) * size);
        std::memcpy(out[i].data(), bytes.data() + i * per, per);
    }
    return out;
}

}  // namespace

void save_dataset(const ZoneDataset& ds, const fs::path& dir) {
    if (ds.samples.empty()) throw ValidationError("empty dataset");
    validate_dataset(ds);
    fs::create_directories(dir);

    write_patch_tensor(dir / "patches_t2.bin", ds.samples, Modality::T2W);
    write_patch_tensor(dir / "patches_adc.bin", ds.samples, Modality::ADC);

    std::ostringstream labels;
    labels << "sample_id,case_id,zone,label\n";
    for (const auto& s : ds.samples)
        labels << s.sample_id << ',' << s.t2.case_id << ',' << zone_name(s.zone) << ','
               << s.label << '\n';
    write_file_text(dir / "labels.csv", labels.str());

    json manifest;
    manifest["version"] = 1;
    manifest["zone"] = zone_name(ds.zone);
    manifest["split"] = split_name(ds.split);
    manifest["count"] = ds.samples.size();
    manifest["t2_shape"] = {ds.samples.size(), kT2PatchSize, kT2PatchSize};
    manifest["adc_shape"] = {ds.samples.size(), kAdcPatchSize, kAdcPatchSize};
    manifest["checksums"] = {
        {"patches_t2.bin", to_hex(hash_file(dir / "patches_t2.bin"))},
        {"patches_adc.bin", to_hex(hash_file(dir / "patches_adc.bin"))},
        {"labels.csv", to_hex(hash_file(dir / "labels.csv"))},
    };
    write_file_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

ZoneDataset load_dataset(const fs::path& dir) {
    json manifest;
    try {
        manifest = json::parse(read_file_text(dir / "manifest.json"));
    } catch (const json::exception& e) {
        throw ValidationError("bad manifest in " + dir.string() + ": " + e.what());
    }
    if (manifest.at("version").get<int>() != 1)
        throw ValidationError("unsupported container version");

    for (const auto& [file, sum] : manifest.at("checksums").items()) {
        const std::string actual = to_hex(hash_file(dir / file));
        if (actual != sum.get<std::string>())
            throw ValidationError("checksum mismatch for " + file);
    }

    const auto n = manifest.at("count").get<std::size_t>();
    const Zone zone = parse_zone(manifest.at("zone").get<std::string>());
    const Split split = parse_split(manifest.at("split").get<std::string>());

    auto t2 = read_patch_tensor(dir / "patches_t2.bin", n, kT2PatchSize);
    auto adc = read_patch_tensor(dir / "patches_adc.bin", n, kAdcPatchSize);

    auto rows = read_csv(dir / "labels.csv");
    if (rows.empty() || rows[0] != std::vector<std::string>{"sample_id", "case_id", "zone", "label"})
        throw ValidationError("bad labels.csv header");
    if (rows.size() != n + 1)
        throw ValidationError("labels.csv row count disagrees with manifest");

    ZoneDataset ds;
    ds.zone = zone;
    ds.split = split;
    ds.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rows[i + 1];
        if (r.size() != 4) throw ValidationError("bad labels.csv row");
        const Zone z = parse_zone(r[2]);
        const int label = static_cast<int>(parse_long(r[3]));
        Patch pt2 = make_patch(std::move(t2[i]), Modality::T2W, z, label, r[1], r[0]);
        Patch padc = make_patch(std::move(adc[i]), Modality::ADC, z, label, r[1], r[0]);
        ds.samples.push_back(make_paired_sample(std::move(pt2), std::move(padc)));
    }
    validate_dataset(ds);
    return ds;
}

void save_feature_csv(const std::vector<FeatureVector>& rows, const fs::path& path) {
    std::ostringstream out;
    out << "sample_id,zone,label";
    for (const auto& n : feature_names()) out << ',' << n;
    out << '\n';
    for (const auto& fv : rows) {
        out << fv.sample_id << ',' << zone_name(fv.zone) << ',' << fv.label;
        for (double v : fv.values) out << ',' << format_double(v);
        out << '\n';
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_text(path, out.str());
}

std::vector<FeatureVector> load_feature_csv(const fs::path& path) {
    auto rows = read_csv(path);
    if (rows.empty()) throw ValidationError("empty feature CSV: " + path.string());
    const auto& header = rows[0];
    if (header.size() != 3 + kFeatureCount || header[0] != "sample_id" || header[1] != "zone" ||
        header[2] != "label")
        throw ValidationError("bad feature CSV header in " + path.string());
    for (int i = 0; i < kFeatureCount; ++i)
        if (header[static_cast<std::size_t>(3 + i)] != feature_name(i))
            throw ValidationError("feature CSV column " + std::to_string(3 + i) +
                                  " is not the canonical '" + feature_name(i) + "'");

    std::vector<FeatureVector> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != 3 + kFeatureCount)
            throw ValidationError("feature CSV row has wrong arity");
        FeatureVector fv;
        fv.sample_id = row[0];
        fv.zone = parse_zone(row[1]);
        fv.label = static_cast<int>(parse_long(row[2]));
        if (fv.label != 0 && fv.label != 1) throw ValidationError("feature label must be 0/1");
        for (int i = 0; i < kFeatureCount; ++i) {
            const double v = parse_double(row[static_cast<std::size_t>(3 + i)]);
            if (!std::isfinite(v)) throw ValidationError("non-finite feature value");
            fv.values[static_cast<std::size_t>(i)] = v;
        }
        out.push_back(std::move(fv));
    }
    return out;
}

}  // namespace zldc
