#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "zldc/core.hpp"

namespace zldc {
namespace eval {

// Scores with ground-truth labels for one test set.
struct LabeledScores {
    std::vector<double> scores;
    std::vector<int> labels;  // 0/1
};

// Equal lengths, N >= 1, finite scores, binary labels.
void validate_scores(const LabeledScores& ls);

struct RocPoint {
    double threshold = 0.0;  // classify positive when score >= threshold
    double fpr = 0.0;
    double tpr = 0.0;
};

struct RocResult {
    // Leading (inf, 0, 0) anchor, then one point per unique score in
    // descending order; the last point is always (1, 1).
    std::vector<RocPoint> points;
    double auc = 0.0;
};

// Thresholds at unique scores with ties grouped. The trapezoidal area is
// accumulated in exact integer arithmetic, so it equals the pairwise
// concordance statistic (ties counted 1/2) up to one final division.
// Requires both classes.
RocResult roc_auc(const LabeledScores& ls);

struct PrPoint {
    double threshold = 0.0;
    double recall = 0.0;
    double precision = 0.0;
};

struct PrResult {
    std::vector<PrPoint> points;  // one per unique score, descending
    double auc = 0.0;             // average-precision step sum
};

// Average precision: sum over thresholds of (R_k - R_{k-1}) * P_k.
// Requires at least one positive.
PrResult pr_auc(const LabeledScores& ls);

struct Confusion {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
};

struct F1Result {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Confusion counts;
};

// Predictions are score >= threshold. Ratios with zero denominators are 0,
// as is F1 when precision + recall == 0.
F1Result f1_at(const LabeledScores& ls, double threshold = 0.5);

// One model's scores over the shared test rows. Models that cannot expose
// feature importances (the RBF SVM) leave `importances` empty; otherwise it
// holds kFeatureCount values in canonical feature order.
struct ModelScores {
    std::string kind;
    Zone zone = Zone::PZ;
    std::vector<double> scores;
    std::vector<double> importances;
};

struct ReportRow {
    std::string kind;
    double roc_auc = 0.0;
    double pr_auc = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Confusion counts;
};

struct RankedFeature {
    std::string name;
    double importance = 0.0;
};

struct ZoneReport {
    Zone zone = Zone::PZ;
    double f1_threshold = 0.5;
    std::vector<ReportRow> rows;           // one per model, input order
    std::map<std::string, RocResult> roc;  // keyed by model kind
    std::map<std::string, PrResult> pr;
    // Only models that provided importances appear here, ranked descending
    // (ties keep canonical feature order).
    std::map<std::string, std::vector<RankedFeature>> rankings;
};

// labels are the shared ground truth; every model must match the report zone
// and score exactly labels.size() rows. Model kinds must be unique.
ZoneReport zone_report(Zone zone, const std::vector<int>& labels,
                       const std::vector<ModelScores>& models, double f1_threshold = 0.5);

// Writes report.csv, report.json and per-model roc_<kind>.csv,
// pr_<kind>.csv, importances_<kind>.csv under dir (created if missing).
void write_zone_report(const ZoneReport& report, const std::filesystem::path& dir);

}  // namespace eval
}  // namespace zldc
