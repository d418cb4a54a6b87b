#include "zldc/phantom.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "zldc/util.hpp"

using json = nlohmann::json;

namespace zldc {
namespace phantom {

namespace {

// Fixed intensity model. Values are arbitrary scanner-like units; what
// matters is the ordering (AS darkest on T2, lesions darker than their zone)
// and the noise scales the lesion contrast is defined against.
struct ModalityModel {
    double background_mean;
    double sigma0;
    std::map<Zone, double> zone_mean;
    int blur_radius;    // box smoothing of the heterogeneity field
    double lesion_rho;  // Gaussian blob radius, pixels
};

const ModalityModel kT2Model = {
    200.0, 60.0, {{Zone::PZ, 700.0}, {Zone::TZ, 500.0}, {Zone::AS, 350.0}}, 2, 3.5};
const ModalityModel kAdcModel = {
    800.0, 150.0, {{Zone::PZ, 1600.0}, {Zone::TZ, 1400.0}, {Zone::AS, 1200.0}}, 1, 1.3};

// mean of exp(-d^2 / (2 rho^2)) over the disc of radius 2*rho
const double kBlobCoreMean = (1.0 - std::exp(-2.0)) / 2.0;

struct PixelRect {
    int r0, r1, c0, c1;  // half-open
    bool contains(int r, int c) const { return r >= r0 && r < r1 && c >= c0 && c < c1; }
    long area() const { return long(r1 - r0) * (c1 - c0); }
};

PixelRect to_pixels(const ZoneRect& z, int rows, int cols) {
    PixelRect p;
    p.r0 = int(std::lround(z.r0 * rows));
    p.r1 = int(std::lround(z.r1 * rows));
    p.c0 = int(std::lround(z.c0 * cols));
    p.c1 = int(std::lround(z.c1 * cols));
    return p;
}

// Smoothed standard-normal field: white noise, box blur, then empirical
// re-standardization over the whole grid.
Image smooth_field(Rng& rng, int rows, int cols, int radius) {
    Image white;
    white.rows = rows;
    white.cols = cols;
    white.v.resize(std::size_t(rows) * cols);
    for (double& x : white.v) x = rng.next_normal();
    if (radius <= 0) return white;

    Image out = white;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double s = 0;
            int n = 0;
            for (int dr = -radius; dr <= radius; ++dr)
                for (int dc = -radius; dc <= radius; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= rows || cc >= cols) continue;
                    s += white.at(rr, cc);
                    ++n;
                }
            out.v[std::size_t(r) * cols + c] = s / double(n);
        }

    double mean = 0;
    for (double x : out.v) mean += x;
    mean /= double(out.v.size());
    double var = 0;
    for (double x : out.v) var += (x - mean) * (x - mean);
    var /= double(out.v.size());
    const double sd = std::sqrt(var);
    for (double& x : out.v) x = sd > 0 ? (x - mean) / sd : 0.0;
    return out;
}

Image render_modality(const ModalityModel& model, const PhantomConfig& cfg, int rows, int cols,
                      Rng& rng, const std::map<Zone, PixelRect>& rects) {
    Image img;
    img.rows = rows;
    img.cols = cols;
    img.v.resize(std::size_t(rows) * cols);
    for (double& x : img.v) x = rng.next_normal();  // unit white noise, scaled below

    Image field = smooth_field(rng, rows, cols, model.blur_radius);

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            double mean = model.background_mean;
            double extra = 0.0;
            for (const auto& [zone, rect] : rects) {
                if (!rect.contains(r, c)) continue;
                mean = model.zone_mean.at(zone);
                extra = cfg.heterogeneity.at(zone) * model.sigma0 * field.at(r, c);
                break;
            }
            auto& px = img.v[std::size_t(r) * cols + c];
            px = mean + model.sigma0 * px + extra;
        }
    return img;
}

void implant_lesion(Image& img, int cr, int cc, double amplitude, double rho) {
    for (int r = 0; r < img.rows; ++r)
        for (int c = 0; c < img.cols; ++c) {
            const double d2 = double(r - cr) * (r - cr) + double(c - cc) * (c - cc);
            img.v[std::size_t(r) * img.cols + c] -=
                amplitude * std::exp(-d2 / (2.0 * rho * rho));
        }
}

sampler::Mask rect_mask(int rows, int cols, const PixelRect& rect) {
    auto m = sampler::make_mask(rows, cols);
    for (int r = rect.r0; r < rect.r1; ++r)
        for (int c = rect.c0; c < rect.c1; ++c) m.set(r, c, true);
    return m;
}

// The emitted zone masks are eroded by the sampling half-window so that any
// admissible patch center yields a window fully inside the homogeneous band;
// intensities are still rendered over the full rect. Without this, windows
// centered near a band edge average in background and the zone statistics
// stop meaning anything.
PixelRect erode_for_window(const PixelRect& rect, int window) {
    PixelRect e;
    e.r0 = rect.r0 + window / 2;
    e.r1 = rect.r1 - (window - window / 2) + 1;
    e.c0 = rect.c0 + window / 2;
    e.c1 = rect.c1 - (window - window / 2) + 1;
    return e;
}

// Lesioned zone or not set. One finding per case keeps the per-zone counts
// exact and the clean-case pool well defined.
struct CasePlan {
    std::string case_id;
    bool has_lesion = false;
    Zone lesion_zone = Zone::PZ;
};

sampler::CaseImage generate_case(const PhantomConfig& cfg, const CasePlan& plan) {
    Rng rng(cfg.seed, "phantom:" + plan.case_id, 0);

    std::map<Zone, PixelRect> t2_rects, adc_rects;
    for (const auto& [zone, zr] : cfg.zone_rects) {
        t2_rects[zone] = to_pixels(zr, cfg.t2_rows, cfg.t2_cols);
        adc_rects[zone] = to_pixels(zr, cfg.adc_rows, cfg.adc_cols);
    }

    sampler::CaseImage c;
    c.case_id = plan.case_id;
    c.t2 = render_modality(kT2Model, cfg, cfg.t2_rows, cfg.t2_cols, rng, t2_rects);
    c.adc = render_modality(kAdcModel, cfg, cfg.adc_rows, cfg.adc_cols, rng, adc_rects);
    for (const auto& [zone, rect] : t2_rects)
        c.t2_masks[zone] =
            rect_mask(cfg.t2_rows, cfg.t2_cols, erode_for_window(rect, kT2PatchSize));
    for (const auto& [zone, rect] : adc_rects)
        c.adc_masks[zone] =
            rect_mask(cfg.adc_rows, cfg.adc_cols, erode_for_window(rect, kAdcPatchSize));

    if (plan.has_lesion) {
        const Zone zone = plan.lesion_zone;
        const PixelRect& rect = t2_rects.at(zone);
        // margin keeps the blob core and the sampling window inside the zone
        const int margin =
            std::max(kT2PatchSize / 2, int(std::ceil(2.0 * kT2Model.lesion_rho)));
        if (rect.r1 - rect.r0 <= 2 * margin || rect.c1 - rect.c0 <= 2 * margin)
            throw ValidationError("zone " + std::string(zone_name(zone)) +
                                  " too small to host a lesion");
        sampler::Finding f;
        f.zone = zone;
        f.t2_row = rect.r0 + margin + int(rng.next_below(std::uint64_t(rect.r1 - rect.r0 - 2 * margin)));
        f.t2_col = rect.c0 + margin + int(rng.next_below(std::uint64_t(rect.c1 - rect.c0 - 2 * margin)));
        auto [ar, ac] = sampler::map_center(f.t2_row, f.t2_col, cfg.t2_rows, cfg.t2_cols,
                                            cfg.adc_rows, cfg.adc_cols);
        f.adc_row = ar;
        f.adc_col = ac;
        const PixelRect& arect = adc_rects.at(zone);
        const int amargin = std::max(kAdcPatchSize / 2, int(std::ceil(2.0 * kAdcModel.lesion_rho)));
        if (ar - amargin < arect.r0 || ar + amargin > arect.r1 ||
            ac - amargin < arect.c0 || ac + amargin > arect.c1) {
            // geometry too tight for the ADC-side blob; a config problem, not
            // a runtime surprise
            throw ValidationError("lesion does not fit the ADC zone geometry");
        }

        const double h = cfg.heterogeneity.at(zone);
        const double amp_t2 =
            cfg.delta * kT2Model.sigma0 * std::sqrt(1.0 + h * h) / kBlobCoreMean;
        const double amp_adc =
            cfg.delta * kAdcModel.sigma0 * std::sqrt(1.0 + h * h) / kBlobCoreMean;
        implant_lesion(c.t2, f.t2_row, f.t2_col, amp_t2, kT2Model.lesion_rho);
        implant_lesion(c.adc, f.adc_row, f.adc_col, amp_adc, kAdcModel.lesion_rho);
        c.findings.push_back(f);
    }
    return c;
}

std::vector<CasePlan> plan_split(const PhantomConfig& cfg, Split split) {
    std::vector<CasePlan> plans;
    const char* prefix = split == Split::Train ? "tr" : "te";
    auto pad = [](int n) {
        std::string s = std::to_string(n);
        return std::string(4 - std::min<std::size_t>(4, s.size()), '0') + s;
    };
    static const std::map<Zone, int> kNoCounts;
    auto cit = cfg.counts.find(split);
    const auto& zone_counts = cit == cfg.counts.end() ? kNoCounts : cit->second;
    for (Zone zone : {Zone::PZ, Zone::TZ, Zone::AS}) {
        auto it = zone_counts.find(zone);
        const int n = it == zone_counts.end() ? 0 : it->second;
        std::string zn = zone_name(zone);
        std::transform(zn.begin(), zn.end(), zn.begin(), [](char ch) { return char(std::tolower(ch)); });
        for (int i = 0; i < n; ++i) {
            CasePlan p;
            p.case_id = std::string(prefix) + "_" + zn + pad(i);
            p.has_lesion = true;
            p.lesion_zone = zone;
            plans.push_back(p);
        }
    }
    auto it = cfg.clean_cases.find(split);
    const int n_clean = it == cfg.clean_cases.end() ? 0 : it->second;
    for (int i = 0; i < n_clean; ++i) {
        CasePlan p;
        p.case_id = std::string(prefix) + "_clean" + pad(i);
        plans.push_back(p);
    }
    return plans;
}

std::vector<sampler::CaseImage> generate_split(const PhantomConfig& cfg, Split split,
                                               int workers) {
    auto plans = plan_split(cfg, split);
    std::vector<sampler::CaseImage> cases(plans.size());
    parallel_for(plans.size(), workers,
                 [&](std::size_t i) { cases[i] = generate_case(cfg, plans[i]); });
    for (const auto& c : cases) sampler::validate_case(c);
    return cases;
}

}  // namespace

void validate_phantom_config(const PhantomConfig& cfg) {
    if (cfg.t2_rows < 32 || cfg.t2_cols < 32 || cfg.adc_rows < 12 || cfg.adc_cols < 12)
        throw ValidationError("phantom image sizes too small for the patch windows");
    if (!(cfg.delta >= 0.0)) throw ValidationError("delta must be >= 0");
    for (Zone z : {Zone::PZ, Zone::TZ, Zone::AS}) {
        if (!cfg.heterogeneity.count(z) || !(cfg.heterogeneity.at(z) >= 0.0))
            throw ValidationError("heterogeneity must be >= 0 for every zone");
        if (!cfg.zone_rects.count(z)) throw ValidationError("missing zone rect");
        const auto& r = cfg.zone_rects.at(z);
        if (!(r.r0 >= 0 && r.r0 < r.r1 && r.r1 <= 1 && r.c0 >= 0 && r.c0 < r.c1 && r.c1 <= 1))
            throw ValidationError("zone rects must be fractions with r0<r1, c0<c1");
    }
    if (!(cfg.heterogeneity.at(Zone::TZ) > cfg.heterogeneity.at(Zone::PZ)))
        throw ValidationError("TZ heterogeneity must exceed PZ heterogeneity");
    for (const auto& [split, zc] : cfg.counts)
        for (const auto& [zone, n] : zc) {
            (void)split;
            (void)zone;
            if (n < 0) throw ValidationError("case counts must be >= 0");
        }
    for (const auto& [split, n] : cfg.clean_cases) {
        (void)split;
        if (n < 0) throw ValidationError("clean case counts must be >= 0");
    }
    // zones must not collide (checked on the default-resolution grid)
    for (Zone a : {Zone::PZ, Zone::TZ, Zone::AS})
        for (Zone b : {Zone::PZ, Zone::TZ, Zone::AS}) {
            if (a >= b) continue;
            const auto& ra = cfg.zone_rects.at(a);
            const auto& rb = cfg.zone_rects.at(b);
            const bool overlap = ra.r0 < rb.r1 && rb.r0 < ra.r1 && ra.c0 < rb.c1 && rb.c0 < ra.c1;
            if (overlap) throw ValidationError("zone rects overlap");
        }
}

PhantomConfig phantom_config_from_json(const json& j) {
    PhantomConfig cfg;
    if (j.contains("t2_size")) {
        cfg.t2_rows = j.at("t2_size").at(0).get<int>();
        cfg.t2_cols = j.at("t2_size").at(1).get<int>();
    }
    if (j.contains("adc_size")) {
        cfg.adc_rows = j.at("adc_size").at(0).get<int>();
        cfg.adc_cols = j.at("adc_size").at(1).get<int>();
    }
    if (j.contains("delta")) cfg.delta = j.at("delta").get<double>();
    if (j.contains("heterogeneity"))
        for (auto it = j.at("heterogeneity").begin(); it != j.at("heterogeneity").end(); ++it)
            cfg.heterogeneity[parse_zone(it.key())] = it.value().get<double>();
    if (j.contains("counts")) {
        cfg.counts.clear();
        for (auto sit = j.at("counts").begin(); sit != j.at("counts").end(); ++sit) {
            Split split = parse_split(sit.key());
            for (auto zit = sit.value().begin(); zit != sit.value().end(); ++zit)
                cfg.counts[split][parse_zone(zit.key())] = zit.value().get<int>();
        }
    }
    if (j.contains("clean_cases")) {
        cfg.clean_cases.clear();
        for (auto it = j.at("clean_cases").begin(); it != j.at("clean_cases").end(); ++it)
            cfg.clean_cases[parse_split(it.key())] = it.value().get<int>();
    }
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("zone_rects"))
        for (auto it = j.at("zone_rects").begin(); it != j.at("zone_rects").end(); ++it) {
            const auto& a = it.value();
            cfg.zone_rects[parse_zone(it.key())] = {a.at(0).get<double>(), a.at(1).get<double>(),
                                                    a.at(2).get<double>(), a.at(3).get<double>()};
        }
    validate_phantom_config(cfg);
    return cfg;
}

json phantom_config_to_json(const PhantomConfig& cfg) {
    json j;
    j["t2_size"] = {cfg.t2_rows, cfg.t2_cols};
    j["adc_size"] = {cfg.adc_rows, cfg.adc_cols};
    j["delta"] = cfg.delta;
    for (const auto& [zone, h] : cfg.heterogeneity) j["heterogeneity"][zone_name(zone)] = h;
    for (const auto& [split, zc] : cfg.counts)
        for (const auto& [zone, n] : zc) j["counts"][split_name(split)][zone_name(zone)] = n;
    for (const auto& [split, n] : cfg.clean_cases) j["clean_cases"][split_name(split)] = n;
    j["seed"] = cfg.seed;
    for (const auto& [zone, r] : cfg.zone_rects)
        j["zone_rects"][zone_name(zone)] = {r.r0, r.r1, r.c0, r.c1};
    return j;
}

PhantomCorpus generate_corpus(const PhantomConfig& cfg, int workers) {
    validate_phantom_config(cfg);
    PhantomCorpus corpus;
    corpus.train = generate_split(cfg, Split::Train, workers);
    corpus.test = generate_split(cfg, Split::Test, workers);
    return corpus;
}

void save_phantom_corpus(const PhantomCorpus& corpus, const std::string& dir) {
    sampler::save_corpus(corpus.train, dir + "/train");
    sampler::save_corpus(corpus.test, dir + "/test");
}

}  // namespace phantom
}  // namespace zldc
