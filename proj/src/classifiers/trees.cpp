#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "zldc/classifiers.hpp"
#include "zldc/rng.hpp"

namespace zldc {
namespace cls {
namespace {

constexpr int kForestFeatures = 6;  // ceil(sqrt(26))

// Selects k of [0,n) by partial Fisher-Yates, returned sorted.
std::vector<int> choose_sorted(Rng& rng, int n, int k) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    for (int t = 0; t < k; ++t) {
        const int j = t + int(rng.next_below(std::uint64_t(n - t)));
        std::swap(idx[std::size_t(t)], idx[std::size_t(j)]);
    }
    idx.resize(std::size_t(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

// Split point between two distinct sorted values. The average of two nearly
// adjacent doubles can round up to the upper value, which would send every
// sample left and create an empty child; fall back to the lower value, which
// partitions x <= t identically to the intended midpoint.
double split_point(double lo, double hi) {
    const double mid = (lo + hi) / 2.0;
    return mid < hi ? mid : lo;
}

struct ForestSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

int grow_forest_node(Tree& tree, std::array<double, kFeatureCount>& imp,
                     const std::vector<Row>& X, const std::vector<int>& Y,
                     const std::vector<std::size_t>& rows, Rng& rng, std::size_t root_n) {
    const std::size_t n = rows.size();
    std::size_t pos = 0;
    for (std::size_t r : rows) pos += std::size_t(Y[r]);

    auto make_leaf = [&]() {
        TreeNode leaf;
        leaf.value = double(pos) / double(n);
        tree.nodes.push_back(leaf);
        return int(tree.nodes.size()) - 1;
    };
    if (n < 2 || pos == 0 || pos == n) return make_leaf();

    // Candidate features for this split; sampled order breaks gain ties.
    std::array<int, kFeatureCount> feats;
    std::iota(feats.begin(), feats.end(), 0);
    for (int t = 0; t < kForestFeatures; ++t) {
        const int j = t + int(rng.next_below(std::uint64_t(kFeatureCount - t)));
        std::swap(feats[std::size_t(t)], feats[std::size_t(j)]);
    }

    ForestSplit best;
    std::vector<std::pair<double, int>> vals(n);
    for (int t = 0; t < kForestFeatures; ++t) {
        const int f = feats[std::size_t(t)];
        for (std::size_t i = 0; i < n; ++i)
            vals[i] = {X[rows[i]][std::size_t(f)], Y[rows[i]]};
        std::sort(vals.begin(), vals.end());
        std::size_t left_pos = 0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            left_pos += std::size_t(vals[i].second);
            if (vals[i].first == vals[i + 1].first) continue;
            const double gain =
                split_gain_entropy(left_pos, i + 1, pos - left_pos, n - i - 1);
            if (gain > best.gain) {
                best.feature = f;
                best.threshold = split_point(vals[i].first, vals[i + 1].first);
                best.gain = gain;
            }
        }
    }
    if (best.feature < 0) return make_leaf();  // all candidates constant

    imp[std::size_t(best.feature)] += double(n) / double(root_n) * best.gain;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
        (X[r][std::size_t(best.feature)] <= best.threshold ? left : right).push_back(r);

    TreeNode inner;
    inner.feature = best.feature;
    inner.threshold = best.threshold;
    tree.nodes.push_back(inner);
    const int idx = int(tree.nodes.size()) - 1;
    const int l = grow_forest_node(tree, imp, X, Y, left, rng, root_n);
    const int r = grow_forest_node(tree, imp, X, Y, right, rng, root_n);
    tree.nodes[std::size_t(idx)].left = l;
    tree.nodes[std::size_t(idx)].right = r;
    return idx;
}

}  // namespace

TrainedModel train_random_forest(const TrainMatrix& data, int n_trees, std::uint64_t seed,
                                 unsigned workers) {
    // A forest degenerates gracefully on single-class data (leaf-only trees),
    // so only the shape of the matrix is validated.
    validate_matrix(data, false);
    if (n_trees < 1) throw ValidationError("n_trees must be positive");

    const std::size_t n = data.x.size();
    struct Build {
        Tree tree;
        std::array<double, kFeatureCount> imp{};
    };
    std::vector<Build> builds(static_cast<std::size_t>(n_trees));

    parallel_for(std::size_t(n_trees), workers, [&](std::size_t t) {
        Rng rng(seed, "rf:tree", t);
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = rng.next_below(n);
        grow_forest_node(builds[t].tree, builds[t].imp, data.x, data.y, rows, rng, n);
    });

    TrainedModel model;
    model.kind = ModelKind::RandomForest;
    model.zone = data.zone;
    model.seed = seed;
    model.hyperparams = {{"n_trees", double(n_trees)}};
    model.importances.assign(kFeatureCount, 0.0);
    for (auto& b : builds) {
        model.forest.trees.push_back(std::move(b.tree));
        for (int j = 0; j < kFeatureCount; ++j)
            model.importances[std::size_t(j)] += b.imp[std::size_t(j)];
    }
    double total = 0.0;
    for (double v : model.importances) total += v;
    if (total > 0.0)
        for (double& v : model.importances) v /= total;
    return model;
}

namespace {

struct GbtCtx {
    const std::vector<Row>& X;
    const std::vector<double>& g;
    const std::vector<double>& h;
    const std::vector<int>& cols;
    double min_gain = 0.0;
    int max_depth = 0;
};

int grow_gbt_node(Tree& tree, std::array<double, kFeatureCount>& imp, const GbtCtx& ctx,
                  const std::vector<std::size_t>& rows, int depth) {
    double G = 0.0, H = 0.0;
    for (std::size_t r : rows) {
        G += ctx.g[r];
        H += ctx.h[r];
    }
    auto make_leaf = [&]() {
        TreeNode leaf;
        leaf.value = -G / (H + 1.0);
        tree.nodes.push_back(leaf);
        return int(tree.nodes.size()) - 1;
    };
    if (depth >= ctx.max_depth || rows.size() < 2) return make_leaf();

    const double parent_score = G * G / (H + 1.0);
    int best_f = -1;
    double best_thr = 0.0, best_gain = -1.0;
    std::vector<std::pair<double, std::size_t>> vals(rows.size());
    for (int f : ctx.cols) {
        for (std::size_t i = 0; i < rows.size(); ++i)
            vals[i] = {ctx.X[rows[i]][std::size_t(f)], rows[i]};
        std::sort(vals.begin(), vals.end());
        double GL = 0.0, HL = 0.0;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            GL += ctx.g[vals[i].second];
            HL += ctx.h[vals[i].second];
            if (vals[i].first == vals[i + 1].first) continue;
            const double GR = G - GL, HR = H - HL;
            const double gain =
                0.5 * (GL * GL / (HL + 1.0) + GR * GR / (HR + 1.0) - parent_score);
            if (gain > best_gain) {
                best_f = f;
                best_thr = split_point(vals[i].first, vals[i + 1].first);
                best_gain = gain;
            }
        }
    }
    if (best_f < 0 || !(best_gain > ctx.min_gain)) return make_leaf();

    imp[std::size_t(best_f)] += best_gain;

    std::vector<std::size_t> left, right;
    for (std::size_t r : rows)
        (ctx.X[r][std::size_t(best_f)] <= best_thr ? left : right).push_back(r);

    TreeNode inner;
    inner.feature = best_f;
    inner.threshold = best_thr;
    tree.nodes.push_back(inner);
    const int idx = int(tree.nodes.size()) - 1;
    const int l = grow_gbt_node(tree, imp, ctx, left, depth + 1);
    const int r = grow_gbt_node(tree, imp, ctx, right, depth + 1);
    tree.nodes[std::size_t(idx)].left = l;
    tree.nodes[std::size_t(idx)].right = r;
    return idx;
}

double log1pexp(double t) { return t > 30.0 ? t : std::log1p(std::exp(t)); }

}  // namespace

TrainedModel train_gbt(const TrainMatrix& data, const GbtHyperparams& hp, std::uint64_t seed) {
    validate_matrix(data, true);
    validate_hyperparams(hp);

    const std::size_t n = data.x.size();
    std::vector<double> margin(n, 0.0), g(n), h(n);

    TrainedModel model;
    model.kind = ModelKind::Gbt;
    model.zone = data.zone;
    model.seed = seed;
    model.hyperparams = {{"colsample_bytree", hp.colsample_bytree},
                         {"gamma", hp.gamma},
                         {"eta", hp.eta},
                         {"max_depth", double(hp.max_depth)},
                         {"n_estimators", double(hp.n_estimators)},
                         {"subsample", hp.subsample}};
    model.gbt.eta = hp.eta;
    std::array<double, kFeatureCount> imp{};

    for (int round = 0; round < hp.n_estimators; ++round) {
        for (std::size_t i = 0; i < n; ++i) {
            const double p = sigmoid(margin[i]);
            g[i] = p - double(data.y[i]);
            h[i] = p * (1.0 - p);
        }

        Rng rng(seed, "gbt:round", std::uint64_t(round));
        std::vector<std::size_t> rows;
        if (hp.subsample < 1.0) {
            const auto k = std::max<std::int64_t>(1, std::llround(hp.subsample * double(n)));
            std::vector<int> chosen = choose_sorted(rng, int(n), int(std::min<std::int64_t>(k, std::int64_t(n))));
            rows.assign(chosen.begin(), chosen.end());
        } else {
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        std::vector<int> cols;
        if (hp.colsample_bytree < 1.0) {
            const auto k = std::max<std::int64_t>(
                1, std::llround(hp.colsample_bytree * double(kFeatureCount)));
            cols = choose_sorted(rng, kFeatureCount,
                                 int(std::min<std::int64_t>(k, kFeatureCount)));
        } else {
            cols.resize(std::size_t(kFeatureCount));
            std::iota(cols.begin(), cols.end(), 0);
        }

        GbtCtx ctx{data.x, g, h, cols, hp.gamma, hp.max_depth};
        Tree tree;
        grow_gbt_node(tree, imp, ctx, rows, 0);

        for (std::size_t i = 0; i < n; ++i)
            margin[i] += hp.eta * tree_value(tree, data.x[i]);
        model.gbt.trees.push_back(std::move(tree));

        double loss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double sign = data.y[i] == 1 ? 1.0 : -1.0;
            loss += log1pexp(-sign * margin[i]);
        }
        model.gbt.train_loss.push_back(loss / double(n));
    }

    model.importances.assign(kFeatureCount, 0.0);
    double total = 0.0;
    for (int j = 0; j < kFeatureCount; ++j) total += imp[std::size_t(j)];
    if (total > 0.0)
        for (int j = 0; j < kFeatureCount; ++j)
            model.importances[std::size_t(j)] = imp[std::size_t(j)] / total;
    return model;
}

}  // namespace cls
}  // namespace zldc
