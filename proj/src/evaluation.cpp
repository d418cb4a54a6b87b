#include "zldc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace zldc {
namespace eval {
namespace {

// Indices sorted by score descending; equal scores stay adjacent so the
// caller can walk tie groups.
std::vector<std::size_t> descending_order(const std::vector<double>& scores) {
    std::vector<std::size_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    return idx;
}

}  // namespace

void validate_scores(const LabeledScores& ls) {
    if (ls.scores.empty()) throw ValidationError("labeled scores must not be empty");
    if (ls.scores.size() != ls.labels.size())
        throw ValidationError("scores and labels disagree on length");
    for (double s : ls.scores)
        if (!std::isfinite(s)) throw ValidationError("scores must be finite");
    for (int y : ls.labels)
        if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
}

RocResult roc_auc(const LabeledScores& ls) {
    validate_scores(ls);
    const std::int64_t pos = std::count(ls.labels.begin(), ls.labels.end(), 1);
    const std::int64_t neg = std::int64_t(ls.labels.size()) - pos;
    if (pos == 0 || neg == 0) throw ValidationError("roc_auc requires both classes");

    const auto idx = descending_order(ls.scores);

    RocResult out;
    out.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});

    // Trapezoid area over tie-grouped steps, twice, in integers:
    // 2*area = sum over groups of dn * (2*tp_before + dp). Dividing by
    // 2*pos*neg at the end makes this exactly the count of correctly ordered
    // pairs plus half the tied pairs.
    std::int64_t tp = 0, fp = 0, area2 = 0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = ls.scores[idx[i]];
        std::int64_t dp = 0, dn = 0;
        std::size_t j = i;
        while (j < idx.size() && ls.scores[idx[j]] == s) {
            if (ls.labels[idx[j]] == 1)
                ++dp;
            else
                ++dn;
            ++j;
        }
        area2 += dn * (2 * tp + dp);
        tp += dp;
        fp += dn;
        out.points.push_back({s, double(fp) / double(neg), double(tp) / double(pos)});
        i = j;
    }
    out.auc = double(area2) / (2.0 * double(pos) * double(neg));
    return out;
}

PrResult pr_auc(const LabeledScores& ls) {
    validate_scores(ls);
    const std::int64_t pos = std::count(ls.labels.begin(), ls.labels.end(), 1);
    if (pos == 0) throw ValidationError("pr_auc requires at least one positive");

    const auto idx = descending_order(ls.scores);

    PrResult out;
    std::int64_t tp = 0, fp = 0;
    double ap = 0.0;
    std::size_t i = 0;
    while (i < idx.size()) {
        const double s = ls.scores[idx[i]];
        std::int64_t dp = 0, dn = 0;
        std::size_t j = i;
        while (j < idx.size() && ls.scores[idx[j]] == s) {
            if (ls.labels[idx[j]] == 1)
                ++dp;
            else
                ++dn;
            ++j;
        }
        tp += dp;
        fp += dn;
        const double recall = double(tp) / double(pos);
        const double precision = double(tp) / double(tp + fp);
        ap += (double(dp) / double(pos)) * precision;
        out.points.push_back({s, recall, precision});
        i = j;
    }
    out.auc = ap;
    return out;
}

F1Result f1_at(const LabeledScores& ls, double threshold) {
    validate_scores(ls);
    if (!std::isfinite(threshold)) throw ValidationError("f1 threshold must be finite");
    F1Result r;
    for (std::size_t i = 0; i < ls.scores.size(); ++i) {
        const bool pred = ls.scores[i] >= threshold;
        const bool truth = ls.labels[i] == 1;
        if (pred && truth)
            ++r.counts.tp;
        else if (pred && !truth)
            ++r.counts.fp;
        else if (!pred && truth)
            ++r.counts.fn;
        else
            ++r.counts.tn;
    }
    const long pp = r.counts.tp + r.counts.fp;
    const long ap = r.counts.tp + r.counts.fn;
    r.precision = pp > 0 ? double(r.counts.tp) / double(pp) : 0.0;
    r.recall = ap > 0 ? double(r.counts.tp) / double(ap) : 0.0;
    const double pr = r.precision + r.recall;
    r.f1 = pr > 0.0 ? 2.0 * r.precision * r.recall / pr : 0.0;
    return r;
}

ZoneReport zone_report(Zone zone, const std::vector<int>& labels,
                       const std::vector<ModelScores>& models, double f1_threshold) {
    if (labels.empty()) throw ValidationError("zone report needs at least one test row");
    for (int y : labels)
        if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
    if (models.empty()) throw ValidationError("zone report needs at least one model");

    ZoneReport rep;
    rep.zone = zone;
    rep.f1_threshold = f1_threshold;
    for (const auto& m : models) {
        if (m.kind.empty()) throw ValidationError("model kind must not be empty");
        if (m.zone != zone)
            throw ValidationError("zone mismatch between model '" + m.kind + "' and report");
        if (m.scores.size() != labels.size())
            throw ValidationError("model '" + m.kind + "' scored a different number of rows");
        if (rep.roc.count(m.kind))
            throw ValidationError("duplicate model kind '" + m.kind + "'");
        if (!m.importances.empty() && int(m.importances.size()) != kFeatureCount)
            throw ValidationError("model '" + m.kind + "' has a malformed importance vector");

        LabeledScores ls{m.scores, labels};
        const auto roc = roc_auc(ls);
        const auto pr = pr_auc(ls);
        const auto f1 = f1_at(ls, f1_threshold);

        ReportRow row;
        row.kind = m.kind;
        row.roc_auc = roc.auc;
        row.pr_auc = pr.auc;
        row.precision = f1.precision;
        row.recall = f1.recall;
        row.f1 = f1.f1;
        row.counts = f1.counts;
        rep.rows.push_back(row);
        rep.roc.emplace(m.kind, roc);
        rep.pr.emplace(m.kind, pr);

        if (!m.importances.empty()) {
            std::vector<RankedFeature> ranked;
            ranked.reserve(kFeatureCount);
            for (int f = 0; f < kFeatureCount; ++f)
                ranked.push_back({feature_name(f), m.importances[std::size_t(f)]});
            std::stable_sort(ranked.begin(), ranked.end(),
                             [](const RankedFeature& a, const RankedFeature& b) {
                                 return a.importance > b.importance;
                             });
            rep.rankings.emplace(m.kind, std::move(ranked));
        }
    }
    return rep;
}

void write_zone_report(const ZoneReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);

    std::ostringstream table;
    table << "model,roc_auc,pr_auc,precision,recall,f1,tp,fp,tn,fn\n";
    for (const auto& r : report.rows)
        table << r.kind << ',' << format_double(r.roc_auc) << ',' << format_double(r.pr_auc)
              << ',' << format_double(r.precision) << ',' << format_double(r.recall) << ','
              << format_double(r.f1) << ',' << r.counts.tp << ',' << r.counts.fp << ','
              << r.counts.tn << ',' << r.counts.fn << '\n';
    write_file_text(dir / "report.csv", table.str());

    nlohmann::json j;
    j["zone"] = zone_name(report.zone);
    j["f1_threshold"] = report.f1_threshold;
    j["models"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        nlohmann::json row;
        row["kind"] = r.kind;
        row["roc_auc"] = r.roc_auc;
        row["pr_auc"] = r.pr_auc;
        row["precision"] = r.precision;
        row["recall"] = r.recall;
        row["f1"] = r.f1;
        row["tp"] = r.counts.tp;
        row["fp"] = r.counts.fp;
        row["tn"] = r.counts.tn;
        row["fn"] = r.counts.fn;
        j["models"].push_back(row);
    }
    write_file_text(dir / "report.json", j.dump(2) + "\n");

    for (const auto& [kind, roc] : report.roc) {
        std::ostringstream os;
        os << "threshold,fpr,tpr\n";
        for (const auto& p : roc.points)
            os << format_double(p.threshold) << ',' << format_double(p.fpr) << ','
               << format_double(p.tpr) << '\n';
        write_file_text(dir / ("roc_" + kind + ".csv"), os.str());
    }
    for (const auto& [kind, pr] : report.pr) {
        std::ostringstream os;
        os << "threshold,recall,precision\n";
        for (const auto& p : pr.points)
            os << format_double(p.threshold) << ',' << format_double(p.recall) << ','
               << format_double(p.precision) << '\n';
        write_file_text(dir / ("pr_" + kind + ".csv"), os.str());
    }
    for (const auto& [kind, ranked] : report.rankings) {
        std::ostringstream os;
        os << "rank,feature,importance\n";
        for (std::size_t i = 0; i < ranked.size(); ++i)
            os << (i + 1) << ',' << ranked[i].name << ',' << format_double(ranked[i].importance)
               << '\n';
        write_file_text(dir / ("importances_" + kind + ".csv"), os.str());
    }
}

}  // namespace eval
}  // namespace zldc
