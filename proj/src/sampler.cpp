#include "zldc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>

#include <json.hpp>

#include "zldc/util.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace zldc {
namespace sampler {

Mask make_mask(int rows, int cols) {
    if (rows <= 0 || cols <= 0) throw ValidationError("mask dimensions must be positive");
    Mask m;
    m.rows = rows;
    m.cols = cols;
    m.m.assign(std::size_t(rows) * cols, 0);
    return m;
}

namespace {

void check_image(const Image& img, const std::string& what) {
    if (img.rows <= 0 || img.cols <= 0 ||
        img.v.size() != std::size_t(img.rows) * img.cols)
        throw ValidationError(what + " has inconsistent dimensions");
    for (double x : img.v)
        if (!std::isfinite(x)) throw ValidationError(what + " contains non-finite values");
}

const Mask* find_mask(const std::map<Zone, Mask>& masks, Zone z) {
    auto it = masks.find(z);
    return it == masks.end() ? nullptr : &it->second;
}

}  // namespace

void validate_case(const CaseImage& c) {
    if (c.case_id.empty()) throw ValidationError("case_id must be non-empty");
    check_image(c.t2, "case " + c.case_id + " t2 image");
    check_image(c.adc, "case " + c.case_id + " adc image");

    auto check_masks = [&](const std::map<Zone, Mask>& masks, const Image& img,
                           const char* mod) {
        std::vector<int> cover(img.v.size(), 0);
        for (const auto& [zone, mask] : masks) {
            (void)zone;
            if (mask.rows != img.rows || mask.cols != img.cols)
                throw ValidationError("case " + c.case_id + ": " + mod +
                                      " mask shape differs from image");
            for (std::size_t i = 0; i < mask.m.size(); ++i)
                if (mask.m[i]) ++cover[i];
        }
        for (int n : cover)
            if (n > 1)
                throw ValidationError("case " + c.case_id + ": overlapping " + mod + " masks");
    };
    check_masks(c.t2_masks, c.t2, "t2");
    check_masks(c.adc_masks, c.adc, "adc");

    for (const Finding& f : c.findings) {
        const Mask* t2m = find_mask(c.t2_masks, f.zone);
        const Mask* adcm = find_mask(c.adc_masks, f.zone);
        if (!t2m || !adcm)
            throw ValidationError("case " + c.case_id + ": finding in zone without masks");
        if (f.t2_row < 0 || f.t2_row >= c.t2.rows || f.t2_col < 0 || f.t2_col >= c.t2.cols ||
            !t2m->at(f.t2_row, f.t2_col))
            throw ValidationError("case " + c.case_id + ": finding centroid outside t2 zone mask");
        if (f.adc_row < 0 || f.adc_row >= c.adc.rows || f.adc_col < 0 ||
            f.adc_col >= c.adc.cols || !adcm->at(f.adc_row, f.adc_col))
            throw ValidationError("case " + c.case_id +
                                  ": finding centroid outside adc zone mask");
    }
}

void validate_sampler_config(const SamplerConfig& cfg) {
    if (cfg.t2_patch <= 0 || cfg.t2_patch % 2 != 0 || cfg.adc_patch <= 0 ||
        cfg.adc_patch % 2 != 0)
        throw ValidationError("patch sizes must be even and positive");
    if (cfg.neg_per_pos != 3)
        throw ValidationError("neg_per_pos is fixed at 3 (the 25/75 sampling ratio)");
    if (cfg.t2_exclusion < 0 || cfg.adc_exclusion < 0)
        throw ValidationError("exclusion radii must be non-negative");
}

std::pair<int, int> map_center(int r, int c, int t2_rows, int t2_cols, int adc_rows,
                               int adc_cols) {
    // floor((x + 0.5) * adc/t2) in exact integer arithmetic
    const auto scale = [](int x, int from, int to) {
        return int((std::int64_t(2 * x + 1) * to) / (2 * std::int64_t(from)));
    };
    return {scale(r, t2_rows, adc_rows), scale(c, t2_cols, adc_cols)};
}

Image extract_patch(const Image& image, int center_row, int center_col, int size) {
    if (size <= 0) throw ValidationError("patch size must be positive");
    const int top = center_row - size / 2;
    const int left = center_col - size / 2;
    if (top < 0 || left < 0 || top + size > image.rows || left + size > image.cols)
        throw ValidationError("patch window out of bounds");
    Image out;
    out.rows = size;
    out.cols = size;
    out.v.resize(std::size_t(size) * size);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c) out.v[std::size_t(r) * size + c] = image.at(top + r, left + c);
    return out;
}

namespace {

bool excluded(int r, int c, int fr, int fc, int radius) {
    return std::max(std::abs(r - fr), std::abs(c - fc)) < radius;
}

Patch cut_patch(const Image& img, int r, int c, int size, Modality mod, Zone zone, int label,
                const std::string& case_id, const std::string& sample_id) {
    Image w = extract_patch(img, r, c, size);
    std::vector<float> px(w.v.size());
    for (std::size_t i = 0; i < w.v.size(); ++i) px[i] = float(w.v[i]);
    return make_patch(std::move(px), mod, zone, label, case_id, sample_id);
}

}  // namespace

std::vector<std::pair<int, int>> admissible_centers(const CaseImage& c, Zone zone,
                                                    const SamplerConfig& cfg) {
    validate_sampler_config(cfg);
    const Mask* t2m = find_mask(c.t2_masks, zone);
    const Mask* adcm = find_mask(c.adc_masks, zone);
    std::vector<std::pair<int, int>> out;
    if (!t2m || !adcm) return out;

    const int ht2 = cfg.t2_patch / 2, hadc = cfg.adc_patch / 2;
    for (int r = 0; r < c.t2.rows; ++r)
        for (int col = 0; col < c.t2.cols; ++col) {
            if (!t2m->at(r, col)) continue;
            if (r - ht2 < 0 || col - ht2 < 0 || r - ht2 + cfg.t2_patch > c.t2.rows ||
                col - ht2 + cfg.t2_patch > c.t2.cols)
                continue;
            auto [ar, ac] = map_center(r, col, c.t2.rows, c.t2.cols, c.adc.rows, c.adc.cols);
            if (ar - hadc < 0 || ac - hadc < 0 || ar - hadc + cfg.adc_patch > c.adc.rows ||
                ac - hadc + cfg.adc_patch > c.adc.cols)
                continue;
            if (!adcm->at(ar, ac)) continue;
            bool near_finding = false;
            for (const Finding& f : c.findings) {
                if (excluded(r, col, f.t2_row, f.t2_col, cfg.t2_exclusion) ||
                    excluded(ar, ac, f.adc_row, f.adc_col, cfg.adc_exclusion)) {
                    near_finding = true;
                    break;
                }
            }
            if (near_finding) continue;
            out.emplace_back(r, col);
        }
    return out;
}

std::vector<PairedSample> sample_negatives(const CaseImage& c, Zone zone,
                                           const SamplerConfig& cfg, Rng& rng, int count) {
    if (count < 0) throw ValidationError("negative sample count must be non-negative");
    auto pool = admissible_centers(c, zone, cfg);
    if (std::size_t(count) > pool.size())
        throw ValidationError("case " + c.case_id + ": admissible region too small (" +
                              std::to_string(pool.size()) + " centers for " +
                              std::to_string(count) + " draws)");

    std::vector<PairedSample> out;
    out.reserve(std::size_t(count));
    for (int i = 0; i < count; ++i) {
        const std::size_t j = std::size_t(i) + rng.next_below(pool.size() - std::size_t(i));
        std::swap(pool[i], pool[j]);
        const auto [r, col] = pool[i];
        const auto [ar, ac] = map_center(r, col, c.t2.rows, c.t2.cols, c.adc.rows, c.adc.cols);
        const std::string sid = c.case_id + ":neg" + std::to_string(i);
        Patch t2 = cut_patch(c.t2, r, col, cfg.t2_patch, Modality::T2W, zone, 0, c.case_id, sid);
        Patch adc =
            cut_patch(c.adc, ar, ac, cfg.adc_patch, Modality::ADC, zone, 0, c.case_id, sid);
        out.push_back(make_paired_sample(t2, adc));
    }
    return out;
}

ZoneDataset build_zone_dataset(const std::vector<CaseImage>& cases, Zone zone,
                               const SamplerConfig& cfg, Split split, int workers) {
    validate_sampler_config(cfg);

    std::vector<std::size_t> order(cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cases[a].case_id < cases[b].case_id;
    });
    for (std::size_t i = 0; i + 1 < order.size(); ++i)
        if (cases[order[i]].case_id == cases[order[i + 1]].case_id)
            throw ValidationError("duplicate case_id " + cases[order[i]].case_id);
    for (const auto& c : cases) validate_case(c);

    // positives at the recorded centroids
    std::vector<PairedSample> positives;
    for (std::size_t oi : order) {
        const CaseImage& c = cases[oi];
        int k = 0;
        for (const Finding& f : c.findings) {
            if (f.zone != zone) continue;
            const std::string sid = c.case_id + ":pos" + std::to_string(k++);
            Patch t2 = cut_patch(c.t2, f.t2_row, f.t2_col, cfg.t2_patch, Modality::T2W, zone, 1,
                                 c.case_id, sid);
            Patch adc = cut_patch(c.adc, f.adc_row, f.adc_col, cfg.adc_patch, Modality::ADC,
                                  zone, 1, c.case_id, sid);
            positives.push_back(make_paired_sample(t2, adc));
        }
    }
    if (positives.empty())
        throw ValidationError("no positive findings in zone " + std::string(zone_name(zone)));

    // per-case admissible capacity, computed in parallel, consumed in case order
    std::vector<long> capacity(cases.size(), 0);
    std::vector<bool> clean(cases.size(), false);
    parallel_for(cases.size(), workers, [&](std::size_t i) {
        const CaseImage& c = cases[order[i]];
        capacity[i] = long(admissible_centers(c, zone, cfg).size());
        bool has = false;
        for (const Finding& f : c.findings)
            if (f.zone == zone) has = true;
        clean[i] = !has;
    });

    // round-robin allocation, cases without findings in this zone first
    const long need = long(cfg.neg_per_pos) * long(positives.size());
    std::vector<long> alloc(cases.size(), 0);
    long assigned = 0;
    for (int pass = 0; pass < 2 && assigned < need; ++pass) {
        const bool want_clean = pass == 0;
        bool progress = true;
        while (assigned < need && progress) {
            progress = false;
            for (std::size_t i = 0; i < order.size() && assigned < need; ++i) {
                if (clean[i] != want_clean) continue;
                if (alloc[i] < capacity[i]) {
                    ++alloc[i];
                    ++assigned;
                    progress = true;
                }
            }
        }
    }
    if (assigned < need)
        throw ValidationError("insufficient negatives in zone " + std::string(zone_name(zone)) +
                              ": need " + std::to_string(need) + ", admissible " +
                              std::to_string(assigned));

    // per-case draws from streams keyed by (seed, zone, case_id): independent
    // of case order and worker count
    std::vector<std::vector<PairedSample>> drawn(cases.size());
    parallel_for(cases.size(), workers, [&](std::size_t i) {
        if (alloc[i] == 0) return;
        const CaseImage& c = cases[order[i]];
        Rng rng(cfg.seed, std::string("sample:") + zone_name(zone) + ":" + c.case_id, 0);
        drawn[i] = sample_negatives(c, zone, cfg, rng, int(alloc[i]));
    });

    ZoneDataset ds;
    ds.zone = zone;
    ds.split = split;
    ds.samples = std::move(positives);
    for (auto& v : drawn)
        for (auto& s : v) ds.samples.push_back(std::move(s));
    validate_dataset(ds);
    return ds;
}

std::vector<std::pair<long, long>> mask_to_rle(const Mask& mask) {
    std::vector<std::pair<long, long>> runs;
    const long n = long(mask.m.size());
    long i = 0;
    while (i < n) {
        if (!mask.m[std::size_t(i)]) {
            ++i;
            continue;
        }
        long start = i;
        while (i < n && mask.m[std::size_t(i)]) ++i;
        runs.emplace_back(start, i - start);
    }
    return runs;
}

Mask rle_from_runs(int rows, int cols, const std::vector<std::pair<long, long>>& runs) {
    Mask mask = make_mask(rows, cols);
    long prev_end = -1;
    for (const auto& [start, len] : runs) {
        if (start <= prev_end || len <= 0 || start + len > long(mask.m.size()))
            throw ValidationError("invalid mask run-length data");
        for (long i = start; i < start + len; ++i) mask.m[std::size_t(i)] = 1;
        prev_end = start + len - 1;
    }
    return mask;
}

namespace {

void write_tensor(const fs::path& base, const std::string& stem, const Image& img) {
    std::vector<float> buf(img.v.size());
    for (std::size_t i = 0; i < img.v.size(); ++i) buf[i] = float(img.v[i]);
    std::vector<std::uint8_t> bytes(buf.size() * sizeof(float));
    std::memcpy(bytes.data(), buf.data(), bytes.size());
    write_file_bytes((base / (stem + ".bin")).string(), bytes);
    json shape = {{"rows", img.rows}, {"cols", img.cols}};
    write_file_text((base / (stem + ".shape.json")).string(), shape.dump());
}

Image read_tensor(const fs::path& base, const std::string& stem) {
    json shape = json::parse(read_file_text((base / (stem + ".shape.json")).string()));
    Image img;
    img.rows = shape.at("rows").get<int>();
    img.cols = shape.at("cols").get<int>();
    if (img.rows <= 0 || img.cols <= 0) throw ValidationError("invalid tensor shape sidecar");
    auto bytes = read_file_bytes((base / (stem + ".bin")).string());
    const std::size_t n = std::size_t(img.rows) * img.cols;
    if (bytes.size() != n * sizeof(float))
        throw ValidationError("tensor size mismatch for " + stem + ".bin");
    std::vector<float> buf(n);
    std::memcpy(buf.data(), bytes.data(), bytes.size());
    img.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) img.v[i] = double(buf[i]);
    return img;
}

json masks_to_json(const std::map<Zone, Mask>& masks) {
    json out = json::object();
    for (const auto& [zone, mask] : masks) {
        json runs = json::array();
        for (const auto& [start, len] : mask_to_rle(mask)) runs.push_back({start, len});
        out[zone_name(zone)] = {{"rows", mask.rows}, {"cols", mask.cols}, {"runs", runs}};
    }
    return out;
}

std::map<Zone, Mask> masks_from_json(const json& j) {
    std::map<Zone, Mask> out;
    for (auto it = j.begin(); it != j.end(); ++it) {
        Zone z = parse_zone(it.key());
        std::vector<std::pair<long, long>> runs;
        for (const auto& r : it.value().at("runs"))
            runs.emplace_back(r.at(0).get<long>(), r.at(1).get<long>());
        out[z] = rle_from_runs(it.value().at("rows").get<int>(),
                               it.value().at("cols").get<int>(), runs);
    }
    return out;
}

}  // namespace

void save_corpus(const std::vector<CaseImage>& cases, const std::string& dir) {
    if (cases.empty()) throw ValidationError("empty corpus");
    fs::create_directories(dir);
    std::set<std::string> seen;
    for (const CaseImage& c : cases) {
        validate_case(c);
        if (!seen.insert(c.case_id).second)
            throw ValidationError("duplicate case_id " + c.case_id);
        fs::path base = fs::path(dir) / c.case_id;
        fs::create_directories(base);
        write_tensor(base, "t2", c.t2);
        write_tensor(base, "adc", c.adc);
        json masks = {{"t2", masks_to_json(c.t2_masks)}, {"adc", masks_to_json(c.adc_masks)}};
        write_file_text((base / "masks.json").string(), masks.dump(2));
        std::string csv = "zone,t2_row,t2_col,adc_row,adc_col\n";
        for (const Finding& f : c.findings) {
            csv += std::string(zone_name(f.zone)) + "," + std::to_string(f.t2_row) + "," +
                   std::to_string(f.t2_col) + "," + std::to_string(f.adc_row) + "," +
                   std::to_string(f.adc_col) + "\n";
        }
        write_file_text((base / "findings.csv").string(), csv);
    }
}

std::vector<CaseImage> load_corpus(const std::string& dir) {
    if (!fs::is_directory(dir)) throw ValidationError("corpus directory not found: " + dir);
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());
    if (ids.empty()) throw ValidationError("corpus directory has no cases: " + dir);

    std::vector<CaseImage> cases;
    cases.reserve(ids.size());
    for (const std::string& id : ids) {
        fs::path base = fs::path(dir) / id;
        CaseImage c;
        c.case_id = id;
        c.t2 = read_tensor(base, "t2");
        c.adc = read_tensor(base, "adc");
        json masks = json::parse(read_file_text((base / "masks.json").string()));
        c.t2_masks = masks_from_json(masks.at("t2"));
        c.adc_masks = masks_from_json(masks.at("adc"));

        auto rows = read_csv((base / "findings.csv").string());
        if (rows.empty() || rows[0] != std::vector<std::string>{"zone", "t2_row", "t2_col",
                                                                "adc_row", "adc_col"})
            throw ValidationError("case " + id + ": bad findings.csv header");
        for (std::size_t i = 1; i < rows.size(); ++i) {
            if (rows[i].size() != 5)
                throw ValidationError("case " + id + ": bad findings.csv row");
            Finding f;
            f.zone = parse_zone(rows[i][0]);
            f.t2_row = int(parse_long(rows[i][1]));
            f.t2_col = int(parse_long(rows[i][2]));
            f.adc_row = int(parse_long(rows[i][3]));
            f.adc_col = int(parse_long(rows[i][4]));
            c.findings.push_back(f);
        }
        validate_case(c);
        cases.push_back(std::move(c));
    }
    return cases;
}

}  // namespace sampler
}  // namespace zldc
