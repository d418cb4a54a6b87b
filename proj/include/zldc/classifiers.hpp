#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zldc/core.hpp"

namespace zldc {
namespace cls {

using Row = std::array<double, kFeatureCount>;

struct TrainMatrix {
    Zone zone = Zone::PZ;
    std::vector<Row> x;
    std::vector<int> y;  // 0/1
};

// Rows must all carry `zone`; values are copied in canonical feature order.
TrainMatrix matrix_from_features(const std::vector<FeatureVector>& rows, Zone zone);

// Finite entries, binary labels, N >= 1. Trainers that fit a decision
// boundary additionally require both classes (require_both_classes).
void validate_matrix(const TrainMatrix& m, bool require_both_classes = true);

enum class ModelKind { LogregL1, SvmRbf, RandomForest, Gbt };
std::string kind_name(ModelKind k);
ModelKind parse_kind(std::string_view token);

// Per-column z-scoring statistics. Constant columns store std 1 so they map
// to exactly 0 and never blow up on out-of-sample values.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;
};
Scaler fit_scaler(const std::vector<Row>& x);
Row apply_scaler(const Scaler& s, const Row& r);

struct GbtHyperparams {
    double colsample_bytree = 1.0;
    double gamma = 0.0;
    double eta = 0.1;
    int max_depth = 3;
    int n_estimators = 100;
    double subsample = 1.0;
};
void validate_hyperparams(const GbtHyperparams& hp);

// Cross-validated per-zone defaults for the boosted trees.
GbtHyperparams gbt_defaults(Zone zone);

// Binary decision tree in preorder storage; nodes[0] is the root. A node
// with feature -1 is a leaf carrying `value` (class fraction for forests,
// raw weight for boosting). Inner nodes send x[feature] <= threshold left.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
};
struct Tree {
    std::vector<TreeNode> nodes;
};
double tree_value(const Tree& t, const Row& r);

// Entropy (bits) of a binary node and the information gain of a split;
// exposed for tests and reused by the forest grower.
double entropy_bits(std::size_t pos, std::size_t n);
double split_gain_entropy(std::size_t pos_left, std::size_t n_left, std::size_t pos_right,
                          std::size_t n_right);

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct LogregModel {
    std::vector<double> w;  // on z-scored features
    double b = 0.0;
};

struct SvmModel {
    std::vector<Row> support;  // z-scored rows with nonzero dual weight
    std::vector<double> coef;  // alpha_i * y_i, y in {-1,+1}
    double bias = 0.0;
    double gamma = 0.0;
    // Probability calibration P(y=1|f) = 1 / (1 + exp(a*f + b)).
    double platt_a = 0.0;
    double platt_b = 0.0;
};

struct ForestModel {
    std::vector<Tree> trees;  // leaf value = positive fraction among bootstrap rows
};

struct GbtModel {
    std::vector<Tree> trees;  // raw leaf weights; margin = sum of eta * value
    double eta = 0.1;
    std::vector<double> train_loss;  // mean log-loss after each round
};

struct TrainedModel {
    ModelKind kind = ModelKind::LogregL1;
    Zone zone = Zone::PZ;
    std::uint64_t seed = 0;
    std::map<std::string, double> hyperparams;  // echoed into model files
    Scaler scaler;                              // logreg and svm only
    LogregModel logreg;
    SvmModel svm;
    ForestModel forest;
    GbtModel gbt;
    // Trained importances in canonical feature order; empty for svm_rbf.
    std::vector<double> importances;
};

// L1-penalized logistic regression on z-scored features, unpenalized
// intercept, coordinate descent with soft thresholding. Stops when the
// subgradient optimality violation drops to tol (or after max_iter sweeps).
TrainedModel train_logreg_l1(const TrainMatrix& data, double lambda, double tol = 1e-6,
                             int max_iter = 10000);

// Soft-margin RBF SVM via SMO on the dual; gamma <= 0 selects the variance
// heuristic 1/(kFeatureCount * Var(X)) on the z-scored matrix. Probabilities
// come from a sigmoid fit on training decision values.
TrainedModel train_svm_rbf(const TrainMatrix& data, double C = 0.05, double gamma = 0.0,
                           double tol = 1e-4);

// Raw decision value (before calibration); exposed for solver tests.
double svm_decision(const TrainedModel& m, const Row& r);

// Bagged entropy trees: bootstrap of size N per tree, ceil(sqrt(26)) = 6
// candidate features per split, grown to purity or fewer than 2 samples.
// Probability = fraction of trees whose leaf majority is positive.
TrainedModel train_random_forest(const TrainMatrix& data, int n_trees = 1000,
                                 std::uint64_t seed = 0, unsigned workers = 1);

// Newton-boosted trees on the logistic objective, lambda = 1, base margin 0.
TrainedModel train_gbt(const TrainMatrix& data, const GbtHyperparams& hp,
                       std::uint64_t seed = 0);

std::vector<double> predict_proba(const TrainedModel& m, std::span<const Row> rows);
double predict_one(const TrainedModel& m, const Row& r);

// |standardized coefficients| for logreg; normalized total gain for the tree
// models. svm_rbf carries none and is rejected.
std::vector<double> feature_importances(const TrainedModel& m);

// Deterministic stratified fold assignment: positives and negatives are
// shuffled separately and dealt round-robin, so fold sizes differ by at most
// one and per-fold class counts are within one of proportional.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed);

using Trainer = std::function<TrainedModel(const TrainMatrix&)>;

struct CvResult {
    std::vector<std::vector<std::size_t>> folds;  // held-out indices per fold
    std::vector<double> fold_auc;
    double mean_auc = 0.0;
};

// Trains on each fold's complement and scores the held-out fold by ROC-AUC.
// Every fold must contain both classes (fails when positives < k).
CvResult k_fold_cv(const TrainMatrix& data, int k, const Trainer& trainer, std::uint64_t seed);

struct GbtSearchSpace {
    std::pair<double, double> colsample_bytree{0.6, 1.0};
    std::pair<double, double> gamma{0.0, 0.3};
    std::pair<double, double> eta{0.01, 0.3};
    std::pair<int, int> max_depth{2, 6};         // inclusive
    std::pair<int, int> n_estimators{50, 200};   // inclusive
    std::pair<double, double> subsample{0.5, 1.0};
};

struct SearchEntry {
    GbtHyperparams hp;
    double mean_auc = 0.0;
};

struct SearchResult {
    GbtHyperparams best;
    std::size_t best_index = 0;
    std::vector<SearchEntry> table;
};

// Uniform candidates from the space, each scored by k-fold mean ROC-AUC;
// ties go to the first sampled candidate.
SearchResult randomized_search(const TrainMatrix& data, const GbtSearchSpace& space,
                               int n_candidates = 50, int k = 3, std::uint64_t seed = 0);

// JSON text round trip of every parameter, bit exact.
std::string model_payload(const TrainedModel& m);
TrainedModel model_from_payload(const std::string& text);

}  // namespace cls
}  // namespace zldc
