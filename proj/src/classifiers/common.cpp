#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "zldc/classifiers.hpp"
#include "zldc/evaluation.hpp"
#include "zldc/rng.hpp"

namespace zldc {
namespace cls {

TrainMatrix matrix_from_features(const std::vector<FeatureVector>& rows, Zone zone) {
    TrainMatrix m;
    m.zone = zone;
    m.x.reserve(rows.size());
    m.y.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.zone != zone)
            throw ValidationError("feature row '" + r.sample_id + "' belongs to zone " +
                                  zone_name(r.zone) + ", not " + zone_name(zone));
        m.x.push_back(r.values);
        m.y.push_back(r.label);
    }
    return m;
}

void validate_matrix(const TrainMatrix& m, bool require_both_classes) {
    if (m.x.empty()) throw ValidationError("training matrix is empty");
    if (m.x.size() != m.y.size())
        throw ValidationError("training matrix rows and labels disagree");
    for (const auto& row : m.x)
        for (double v : row)
            if (!std::isfinite(v)) throw ValidationError("training matrix has non-finite entries");
    for (int y : m.y)
        if (y != 0 && y != 1) throw ValidationError("labels must be 0 or 1");
    if (require_both_classes) {
        const auto pos = std::count(m.y.begin(), m.y.end(), 1);
        if (m.y.size() < 2 || pos == 0 || pos == std::ptrdiff_t(m.y.size()))
            throw ValidationError("training requires at least one sample of each class");
    }
}

std::string kind_name(ModelKind k) {
    switch (k) {
        case ModelKind::LogregL1: return "logreg_l1";
        case ModelKind::SvmRbf: return "svm_rbf";
        case ModelKind::RandomForest: return "random_forest";
        case ModelKind::Gbt: return "gbt";
    }
    throw ValidationError("unknown model kind");
}

ModelKind parse_kind(std::string_view token) {
    if (token == "logreg_l1") return ModelKind::LogregL1;
    if (token == "svm_rbf") return ModelKind::SvmRbf;
    if (token == "random_forest") return ModelKind::RandomForest;
    if (token == "gbt") return ModelKind::Gbt;
    throw ValidationError("unknown model kind '" + std::string(token) + "'");
}

Scaler fit_scaler(const std::vector<Row>& x) {
    Scaler s;
    s.mean.assign(kFeatureCount, 0.0);
    s.std.assign(kFeatureCount, 0.0);
    const double n = double(x.size());
    for (const auto& row : x)
        for (int j = 0; j < kFeatureCount; ++j) s.mean[std::size_t(j)] += row[std::size_t(j)];
    for (double& m : s.mean) m /= n;
    for (const auto& row : x)
        for (int j = 0; j < kFeatureCount; ++j) {
            const double d = row[std::size_t(j)] - s.mean[std::size_t(j)];
            s.std[std::size_t(j)] += d * d;
        }
    for (double& v : s.std) {
        v = std::sqrt(v / n);
        if (v == 0.0) v = 1.0;
    }
    return s;
}

Row apply_scaler(const Scaler& s, const Row& r) {
    Row out;
    for (int j = 0; j < kFeatureCount; ++j)
        out[std::size_t(j)] = (r[std::size_t(j)] - s.mean[std::size_t(j)]) / s.std[std::size_t(j)];
    return out;
}

void validate_hyperparams(const GbtHyperparams& hp) {
    if (!(hp.colsample_bytree > 0.0 && hp.colsample_bytree <= 1.0))
        throw ValidationError("colsample_bytree must be in (0, 1]");
    if (!(hp.gamma >= 0.0) || !std::isfinite(hp.gamma))
        throw ValidationError("gamma must be non-negative");
    if (!(hp.eta >= 0.0 && hp.eta <= 1.0)) throw ValidationError("eta must be in [0, 1]");
    if (hp.max_depth < 0) throw ValidationError("max_depth must be non-negative");
    if (hp.n_estimators < 0) throw ValidationError("n_estimators must be non-negative");
    if (!(hp.subsample > 0.0 && hp.subsample <= 1.0))
        throw ValidationError("subsample must be in (0, 1]");
}

GbtHyperparams gbt_defaults(Zone zone) {
    switch (zone) {
        case Zone::PZ: return {0.73, 0.009, 0.058, 4, 122, 0.63};
        case Zone::TZ: return {0.70, 0.255, 0.155, 2, 132, 0.65};
        case Zone::AS: return {0.71, 0.013, 0.143, 2, 117, 0.99};
    }
    throw ValidationError("unknown zone");
}

double tree_value(const Tree& t, const Row& r) {
    int i = 0;
    while (t.nodes[std::size_t(i)].feature >= 0) {
        const auto& n = t.nodes[std::size_t(i)];
        i = r[std::size_t(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return t.nodes[std::size_t(i)].value;
}

double entropy_bits(std::size_t pos, std::size_t n) {
    if (n == 0 || pos == 0 || pos == n) return 0.0;
    const double p = double(pos) / double(n);
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double split_gain_entropy(std::size_t pos_left, std::size_t n_left, std::size_t pos_right,
                          std::size_t n_right) {
    const std::size_t n = n_left + n_right;
    const double parent = entropy_bits(pos_left + pos_right, n);
    return parent - double(n_left) / double(n) * entropy_bits(pos_left, n_left) -
           double(n_right) / double(n) * entropy_bits(pos_right, n_right);
}

double predict_one(const TrainedModel& m, const Row& r) {
    for (double v : r)
        if (!std::isfinite(v)) throw ValidationError("prediction row has non-finite entries");
    switch (m.kind) {
        case ModelKind::LogregL1: {
            const Row z = apply_scaler(m.scaler, r);
            double acc = m.logreg.b;
            for (int j = 0; j < kFeatureCount; ++j)
                acc += m.logreg.w[std::size_t(j)] * z[std::size_t(j)];
            return sigmoid(acc);
        }
        case ModelKind::SvmRbf: {
            const double f = svm_decision(m, r);
            return 1.0 / (1.0 + std::exp(m.svm.platt_a * f + m.svm.platt_b));
        }
        case ModelKind::RandomForest: {
            std::size_t votes = 0;
            for (const auto& t : m.forest.trees)
                if (tree_value(t, r) > 0.5) ++votes;
            return double(votes) / double(m.forest.trees.size());
        }
        case ModelKind::Gbt: {
            double margin = 0.0;
            for (const auto& t : m.gbt.trees) margin += m.gbt.eta * tree_value(t, r);
            return sigmoid(margin);
        }
    }
    throw ValidationError("unknown model kind");
}

std::vector<double> predict_proba(const TrainedModel& m, std::span<const Row> rows) {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict_one(m, r));
    return out;
}

std::vector<double> feature_importances(const TrainedModel& m) {
    if (m.kind == ModelKind::SvmRbf)
        throw ValidationError("feature importances are not available for svm_rbf models");
    if (int(m.importances.size()) != kFeatureCount)
        throw ValidationError("model carries no importance vector");
    return m.importances;
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& labels, int k,
                                                       std::uint64_t seed) {
    if (k < 1) throw ValidationError("k must be at least 1");
    if (std::size_t(k) > labels.size()) throw ValidationError("k exceeds the number of samples");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw ValidationError("labels must be 0 or 1");
        (labels[i] == 1 ? pos : neg).push_back(i);
    }
    Rng rp(seed, "cv:pos", 0);
    Rng rn(seed, "cv:neg", 0);
    rp.shuffle(pos);
    rn.shuffle(neg);

    std::vector<std::vector<std::size_t>> folds;
    folds.assign(std::size_t(k), {});
    std::size_t cursor = 0;
    for (std::size_t i : pos) folds[cursor++ % std::size_t(k)].push_back(i);
    for (std::size_t i : neg) folds[cursor++ % std::size_t(k)].push_back(i);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

CvResult k_fold_cv(const TrainMatrix& data, int k, const Trainer& trainer, std::uint64_t seed) {
    validate_matrix(data, true);
    if (k < 2) throw ValidationError("cross validation needs k >= 2");

    CvResult res;
    res.folds = stratified_folds(data.y, k, seed);
    for (std::size_t f = 0; f < res.folds.size(); ++f) {
        const auto& test_idx = res.folds[f];
        bool has_pos = false, has_neg = false;
        for (std::size_t i : test_idx) (data.y[i] ? has_pos : has_neg) = true;
        if (!has_pos || !has_neg)
            throw ValidationError("fold " + std::to_string(f) +
                                  " has a single class; reduce k or add data");
    }

    for (const auto& test_idx : res.folds) {
        std::vector<char> held(data.x.size(), 0);
        for (std::size_t i : test_idx) held[i] = 1;

        TrainMatrix train;
        train.zone = data.zone;
        for (std::size_t i = 0; i < data.x.size(); ++i)
            if (!held[i]) {
                train.x.push_back(data.x[i]);
                train.y.push_back(data.y[i]);
            }
        const TrainedModel model = trainer(train);

        eval::LabeledScores ls;
        for (std::size_t i : test_idx) {
            ls.scores.push_back(predict_one(model, data.x[i]));
            ls.labels.push_back(data.y[i]);
        }
        res.fold_auc.push_back(eval::roc_auc(ls).auc);
    }
    double sum = 0.0;
    for (double a : res.fold_auc) sum += a;
    res.mean_auc = sum / double(res.fold_auc.size());
    return res;
}

SearchResult randomized_search(const TrainMatrix& data, const GbtSearchSpace& space,
                               int n_candidates, int k, std::uint64_t seed) {
    validate_matrix(data, true);
    if (n_candidates < 1) throw ValidationError("need at least one candidate");
    auto check = [](double lo, double hi, const char* name) {
        if (!(lo <= hi) || !std::isfinite(lo) || !std::isfinite(hi))
            throw ValidationError(std::string("empty search range for ") + name);
    };
    check(space.colsample_bytree.first, space.colsample_bytree.second, "colsample_bytree");
    check(space.gamma.first, space.gamma.second, "gamma");
    check(space.eta.first, space.eta.second, "eta");
    check(space.subsample.first, space.subsample.second, "subsample");
    if (space.max_depth.first > space.max_depth.second)
        throw ValidationError("empty search range for max_depth");
    if (space.n_estimators.first > space.n_estimators.second)
        throw ValidationError("empty search range for n_estimators");

    Rng draw(seed, "search:candidates", 0);
    SearchResult res;
    for (int c = 0; c < n_candidates; ++c) {
        GbtHyperparams hp;
        hp.colsample_bytree = draw.uniform(space.colsample_bytree.first, space.colsample_bytree.second);
        hp.gamma = draw.uniform(space.gamma.first, space.gamma.second);
        hp.eta = draw.uniform(space.eta.first, space.eta.second);
        hp.max_depth = space.max_depth.first +
                       int(draw.next_below(std::uint64_t(space.max_depth.second -
                                                         space.max_depth.first + 1)));
        hp.n_estimators = space.n_estimators.first +
                          int(draw.next_below(std::uint64_t(space.n_estimators.second -
                                                            space.n_estimators.first + 1)));
        hp.subsample = draw.uniform(space.subsample.first, space.subsample.second);
        validate_hyperparams(hp);

        const std::uint64_t train_seed = derive_stream(seed, "search:train", std::uint64_t(c));
        const auto cv = k_fold_cv(
            data, k, [&](const TrainMatrix& tm) { return train_gbt(tm, hp, train_seed); }, seed);
        res.table.push_back({hp, cv.mean_auc});
    }
    res.best_index = 0;
    for (std::size_t i = 1; i < res.table.size(); ++i)
        if (res.table[i].mean_auc > res.table[res.best_index].mean_auc) res.best_index = i;
    res.best = res.table[res.best_index].hp;
    return res;
}

namespace {

nlohmann::json tree_to_json(const Tree& t) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : t.nodes)
        nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    return nodes;
}

Tree tree_from_json(const nlohmann::json& j) {
    Tree t;
    for (const auto& n : j) {
        if (!n.is_array() || n.size() != 5) throw ValidationError("malformed tree node");
        TreeNode node;
        node.feature = n[0].get<int>();
        node.threshold = n[1].get<double>();
        node.left = n[2].get<int>();
        node.right = n[3].get<int>();
        node.value = n[4].get<double>();
        t.nodes.push_back(node);
    }
    if (t.nodes.empty()) throw ValidationError("tree has no nodes");
    return t;
}

}  // namespace

std::string model_payload(const TrainedModel& m) {
    nlohmann::json j;
    j["kind"] = kind_name(m.kind);
    j["zone"] = zone_name(m.zone);
    j["seed"] = m.seed;
    j["hyperparams"] = m.hyperparams;
    j["importances"] = m.importances;
    if (m.kind == ModelKind::LogregL1 || m.kind == ModelKind::SvmRbf) {
        j["scaler"] = {{"mean", m.scaler.mean}, {"std", m.scaler.std}};
    }
    switch (m.kind) {
        case ModelKind::LogregL1:
            j["logreg"] = {{"w", m.logreg.w}, {"b", m.logreg.b}};
            break;
        case ModelKind::SvmRbf: {
            nlohmann::json sv = nlohmann::json::array();
            for (const auto& row : m.svm.support) sv.push_back(std::vector<double>(row.begin(), row.end()));
            j["svm"] = {{"support", sv},        {"coef", m.svm.coef},
                        {"bias", m.svm.bias},   {"gamma", m.svm.gamma},
                        {"platt_a", m.svm.platt_a}, {"platt_b", m.svm.platt_b}};
            break;
        }
        case ModelKind::RandomForest: {
            nlohmann::json trees = nlohmann::json::array();
            for (const auto& t : m.forest.trees) trees.push_back(tree_to_json(t));
            j["forest"] = {{"trees", trees}};
            break;
        }
        case ModelKind::Gbt: {
            nlohmann::json trees = nlohmann::json::array();
            for (const auto& t : m.gbt.trees) trees.push_back(tree_to_json(t));
            j["gbt"] = {{"trees", trees}, {"eta", m.gbt.eta}, {"train_loss", m.gbt.train_loss}};
            break;
        }
    }
    return j.dump();
}

TrainedModel model_from_payload(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model payload: ") + e.what());
    }
    try {
        TrainedModel m;
        m.kind = parse_kind(j.at("kind").get<std::string>());
        m.zone = parse_zone(j.at("zone").get<std::string>());
        m.seed = j.at("seed").get<std::uint64_t>();
        m.hyperparams = j.at("hyperparams").get<std::map<std::string, double>>();
        m.importances = j.at("importances").get<std::vector<double>>();
        if (j.contains("scaler")) {
            m.scaler.mean = j["scaler"].at("mean").get<std::vector<double>>();
            m.scaler.std = j["scaler"].at("std").get<std::vector<double>>();
            if (int(m.scaler.mean.size()) != kFeatureCount ||
                int(m.scaler.std.size()) != kFeatureCount)
                throw ValidationError("scaler width mismatch");
        }
        switch (m.kind) {
            case ModelKind::LogregL1:
                m.logreg.w = j.at("logreg").at("w").get<std::vector<double>>();
                m.logreg.b = j.at("logreg").at("b").get<double>();
                if (int(m.logreg.w.size()) != kFeatureCount)
                    throw ValidationError("coefficient width mismatch");
                break;
            case ModelKind::SvmRbf: {
                const auto& js = j.at("svm");
                for (const auto& rowj : js.at("support")) {
                    const auto vals = rowj.get<std::vector<double>>();
                    if (int(vals.size()) != kFeatureCount)
                        throw ValidationError("support vector width mismatch");
                    Row r;
                    std::copy(vals.begin(), vals.end(), r.begin());
                    m.svm.support.push_back(r);
                }
                m.svm.coef = js.at("coef").get<std::vector<double>>();
                if (m.svm.coef.size() != m.svm.support.size())
                    throw ValidationError("dual coefficient count mismatch");
                m.svm.bias = js.at("bias").get<double>();
                m.svm.gamma = js.at("gamma").get<double>();
                m.svm.platt_a = js.at("platt_a").get<double>();
                m.svm.platt_b = js.at("platt_b").get<double>();
                break;
            }
            case ModelKind::RandomForest:
                for (const auto& tj : j.at("forest").at("trees"))
                    m.forest.trees.push_back(tree_from_json(tj));
                if (m.forest.trees.empty()) throw ValidationError("forest has no trees");
                break;
            case ModelKind::Gbt:
                for (const auto& tj : j.at("gbt").at("trees"))
                    m.gbt.trees.push_back(tree_from_json(tj));
                m.gbt.eta = j.at("gbt").at("eta").get<double>();
                m.gbt.train_loss = j.at("gbt").at("train_loss").get<std::vector<double>>();
                break;
        }
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model payload: ") + e.what());
    }
}

}  // namespace cls
}  // namespace zldc
