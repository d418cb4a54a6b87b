#include "zldc/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "zldc/classifiers.hpp"
#include "zldc/evaluation.hpp"
#include "zldc/micronet.hpp"
#include "zldc/phantom.hpp"
#include "zldc/pipeline.hpp"
#include "zldc/texture.hpp"

namespace fs = std::filesystem;

namespace zldc {
namespace {

using nlohmann::json;

std::string num(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

json parse_json_file(const std::string& path) {
    try {
        return json::parse(read_file_text(path));
    } catch (const json::exception& e) {
        throw ValidationError("cannot parse " + path + ": " + e.what());
    }
}

// The CLI verbs mirror the pipeline's seed derivation, so a pipeline run and
// the same stages driven by hand from the same seed produce identical bytes.
std::uint64_t sample_seed(std::uint64_t seed, Split split, Zone zone) {
    return derive_stream(seed, "sample:" + split_name(split) + ":" + zone_name(zone));
}

std::uint64_t train_seed(std::uint64_t seed, const std::string& kind, Zone zone) {
    return derive_stream(seed, "train:" + kind + ":" + zone_name(zone));
}

struct TrainKnobs {
    double logreg_lambda = 0.01;
    double svm_c = 0.05;
    double svm_gamma = 0.0;
    int rf_trees = 300;
};

cls::TrainedModel train_shallow(const std::string& kind, const cls::TrainMatrix& data,
                                const TrainKnobs& knobs, std::uint64_t seed, unsigned workers) {
    if (kind == "logreg_l1") {
        auto m = cls::train_logreg_l1(data, knobs.logreg_lambda);
        m.seed = seed;
        return m;
    }
    if (kind == "svm_rbf") {
        auto m = cls::train_svm_rbf(data, knobs.svm_c, knobs.svm_gamma);
        m.seed = seed;
        return m;
    }
    if (kind == "random_forest")
        return cls::train_random_forest(data, knobs.rf_trees, seed, workers);
    if (kind == "gbt") return cls::train_gbt(data, cls::gbt_defaults(data.zone), seed);
    throw ValidationError("unknown model kind '" + kind + "'");
}

std::vector<Patch> t2_patches(const ZoneDataset& ds) {
    std::vector<Patch> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.push_back(s.t2);
    return out;
}

void write_importances_csv(std::ostream& os, const std::vector<double>& imp) {
    std::vector<int> order(imp.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return imp[std::size_t(a)] > imp[std::size_t(b)]; });
    os << "rank,feature,importance\n";
    for (std::size_t r = 0; r < order.size(); ++r)
        os << (r + 1) << ',' << feature_name(order[r]) << ','
           << format_double(imp[std::size_t(order[r])]) << '\n';
}

int dispatch(int argc, const char* const* argv) {
    CLI::App app{"zone-wise lesion classification toolkit"};
    app.require_subcommand(1);

    std::string config_path, corpus, dataset, features, model_path, out, zone_str = "PZ";
    std::string split_str = "train", kind;
    std::vector<std::string> model_paths;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    int k = 5, n_candidates = 50;
    double threshold = 0.5;
    TrainKnobs knobs;
    net::NetConfig ncfg;

    auto* p_phantom = app.add_subcommand("phantom", "generate a synthetic labeled corpus");
    p_phantom->add_option("--config", config_path, "phantom config JSON");
    p_phantom->add_option("--seed", seed, "global seed");
    p_phantom->add_option("--workers", workers, "worker threads");
    p_phantom->add_option("--out", out, "corpus output directory")->required();

    auto* p_std = app.add_subcommand("standardize", "intensity standardization for T2 images");
    p_std->require_subcommand(1);
    auto* p_fit = p_std->add_subcommand("fit", "fit landmarks on a corpus directory");
    p_fit->add_option("--corpus", corpus, "directory of cases")->required();
    p_fit->add_option("--out", out, "model file")->required();
    auto* p_apply = p_std->add_subcommand("apply", "apply a fitted model to a corpus");
    p_apply->add_option("--corpus", corpus, "directory of cases")->required();
    p_apply->add_option("--model", model_path, "standardizer model file")->required();
    p_apply->add_option("--out", out, "output corpus directory")->required();

    auto* p_sample = app.add_subcommand("sample", "cut paired patches for one zone");
    p_sample->add_option("--corpus", corpus, "directory of cases")->required();
    p_sample->add_option("--zone", zone_str, "PZ | TZ | AS")->required();
    p_sample->add_option("--split", split_str, "train | test");
    p_sample->add_option("--seed", seed, "global seed");
    p_sample->add_option("--workers", workers, "worker threads");
    p_sample->add_option("--out", out, "dataset output directory")->required();

    auto* p_extract = app.add_subcommand("extract", "compute feature rows for a dataset");
    p_extract->add_option("--dataset", dataset, "dataset directory")->required();
    p_extract->add_option("--workers", workers, "worker threads");
    p_extract->add_option("--out", out, "feature CSV path")->required();

    auto* p_train = app.add_subcommand("train", "fit one model and save it");
    p_train->add_option("--features", features, "training feature CSV (shallow models)");
    p_train->add_option("--dataset", dataset, "training dataset directory (cnn)");
    p_train->add_option("--zone", zone_str, "PZ | TZ | AS")->required();
    p_train->add_option("--model", kind, "logreg_l1 | svm_rbf | random_forest | gbt | cnn")
        ->required();
    p_train->add_option("--seed", seed, "global seed");
    p_train->add_option("--workers", workers, "worker threads");
    p_train->add_option("--lambda", knobs.logreg_lambda, "logreg_l1 penalty");
    p_train->add_option("--c", knobs.svm_c, "svm_rbf soft-margin C");
    p_train->add_option("--gamma", knobs.svm_gamma, "svm_rbf gamma (0 = scale heuristic)");
    p_train->add_option("--trees", knobs.rf_trees, "random_forest tree count");
    p_train->add_option("--epochs", ncfg.epochs, "cnn epochs");
    p_train->add_option("--lr", ncfg.lr, "cnn learning rate");
    p_train->add_option("--out", out, "model file")->required();

    auto* p_cv = app.add_subcommand("cv", "stratified k-fold cross-validation");
    p_cv->add_option("--features", features, "feature CSV")->required();
    p_cv->add_option("--zone", zone_str, "PZ | TZ | AS")->required();
    p_cv->add_option("--model", kind, "logreg_l1 | svm_rbf | random_forest | gbt")->required();
    p_cv->add_option("--k", k, "fold count");
    p_cv->add_option("--seed", seed, "global seed");
    p_cv->add_option("--workers", workers, "worker threads");
    p_cv->add_option("--lambda", knobs.logreg_lambda, "logreg_l1 penalty");
    p_cv->add_option("--c", knobs.svm_c, "svm_rbf soft-margin C");
    p_cv->add_option("--gamma", knobs.svm_gamma, "svm_rbf gamma (0 = scale heuristic)");
    p_cv->add_option("--trees", knobs.rf_trees, "random_forest tree count");

    auto* p_search = app.add_subcommand("search", "randomized gbt hyperparameter search");
    p_search->add_option("--features", features, "feature CSV")->required();
    p_search->add_option("--zone", zone_str, "PZ | TZ | AS")->required();
    p_search->add_option("--n", n_candidates, "candidate count");
    p_search->add_option("--k", k, "folds per candidate");
    p_search->add_option("--seed", seed, "global seed");
    p_search->add_option("--out", out, "train on all rows with the best candidate, save here");

    auto* p_eval = app.add_subcommand("evaluate", "score models on a held-out feature CSV");
    p_eval->add_option("--features", features, "feature CSV")->required();
    p_eval->add_option("--zone", zone_str, "PZ | TZ | AS")->required();
    p_eval->add_option("--model", model_paths, "model file (repeatable)")->required();
    p_eval->add_option("--dataset", dataset, "dataset directory (needed for cnn models)");
    p_eval->add_option("--threshold", threshold, "F1 decision threshold");
    p_eval->add_option("--out", out, "report output directory")->required();

    auto* p_imp = app.add_subcommand("importances", "ranked feature importances of a model");
    p_imp->add_option("--model", model_path, "model file")->required();
    p_imp->add_option("--out", out, "CSV path (default: stdout)");

    auto* p_sal = app.add_subcommand("saliency", "input-gradient maps for a cnn model");
    p_sal->add_option("--model", model_path, "cnn model file")->required();
    p_sal->add_option("--dataset", dataset, "dataset directory")->required();
    p_sal->add_option("--out", out, "output directory")->required();

    auto* p_run = app.add_subcommand("run", "full per-zone pipeline from a config file");
    p_run->add_option("--config", config_path, "pipeline config JSON")->required();
    p_run->add_option("--seed", seed, "override the config seed");
    p_run->add_option("--workers", workers, "override the config worker count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or the parse error
        return code == 0 ? 0 : 2;
    }

    if (*p_phantom) {
        phantom::PhantomConfig cfg;
        if (!config_path.empty())
            cfg = phantom::phantom_config_from_json(parse_json_file(config_path));
        if (p_phantom->count("--seed")) cfg.seed = seed;
        const auto corpus_out = phantom::generate_corpus(cfg, int(workers));
        phantom::save_phantom_corpus(corpus_out, out);
        std::printf("wrote %zu train and %zu test cases to %s\n", corpus_out.train.size(),
                    corpus_out.test.size(), out.c_str());
        return 0;
    }

    if (*p_fit) {
        const auto cases = sampler::load_corpus(corpus);
        std::vector<Image> t2s;
        t2s.reserve(cases.size());
        for (const auto& c : cases) t2s.push_back(c.t2);
        const auto model = standardize::fit_standardizer(t2s, {});
        pipe::save_model_file(pipe::wrap_standardizer(model), out);
        std::printf("standardizer fitted on %zu images -> %s\n", t2s.size(), out.c_str());
        return 0;
    }

    if (*p_apply) {
        const auto model = pipe::unwrap_standardizer(pipe::load_model_file(model_path));
        auto cases = sampler::load_corpus(corpus);
        for (auto& c : cases) c.t2 = standardize::apply_standardizer(model, c.t2);
        sampler::save_corpus(cases, out);
        std::printf("standardized %zu cases -> %s\n", cases.size(), out.c_str());
        return 0;
    }

    if (*p_sample) {
        const Zone zone = parse_zone(zone_str);
        const Split split = parse_split(split_str);
        sampler::SamplerConfig scfg;
        scfg.seed = sample_seed(seed, split, zone);
        const auto cases = sampler::load_corpus(corpus);
        const auto ds = sampler::build_zone_dataset(cases, zone, scfg, split, int(workers));
        save_dataset(ds, out);
        std::size_t pos = 0;
        for (const auto& s : ds.samples) pos += std::size_t(s.label);
        std::printf("%s %s: %zu samples (%zu positive) -> %s\n", zone_str.c_str(),
                    split_str.c_str(), ds.samples.size(), pos, out.c_str());
        return 0;
    }

    if (*p_extract) {
        const auto ds = load_dataset(dataset);
        const auto rows = texture::extract_features_batch(ds, workers);
        save_feature_csv(rows, out);
        std::printf("%zu rows x %d features -> %s\n", rows.size(), kFeatureCount, out.c_str());
        return 0;
    }

    if (*p_train) {
        const Zone zone = parse_zone(zone_str);
        if (kind == "cnn") {
            if (dataset.empty()) throw ValidationError("train --model cnn needs --dataset");
            const auto ds = load_dataset(dataset);
            ncfg.seed = train_seed(seed, "cnn", zone);
            const auto run = net::train_net(ncfg, t2_patches(ds));
            pipe::save_model_file(pipe::wrap_net(run.state, zone), out);
            std::printf("cnn trained on %zu patches, final epoch loss %s -> %s\n",
                        ds.samples.size(), num(run.epoch_loss.back()).c_str(), out.c_str());
            return 0;
        }
        if (features.empty()) throw ValidationError("train needs --features");
        const auto data = cls::matrix_from_features(load_feature_csv(features), zone);
        const auto model =
            train_shallow(kind, data, knobs, train_seed(seed, kind, zone), workers);
        pipe::save_model_file(pipe::wrap_classifier(model), out);
        std::printf("%s trained on %zu rows -> %s\n", kind.c_str(), data.x.size(), out.c_str());
        return 0;
    }

    if (*p_cv) {
        const Zone zone = parse_zone(zone_str);
        const auto data = cls::matrix_from_features(load_feature_csv(features), zone);
        const std::uint64_t tseed = train_seed(seed, kind, zone);
        const cls::Trainer trainer = [&](const cls::TrainMatrix& d) {
            return train_shallow(kind, d, knobs, tseed, workers);
        };
        const auto cv = cls::k_fold_cv(data, k, trainer, seed);
        for (std::size_t i = 0; i < cv.fold_auc.size(); ++i)
            std::printf("fold %zu: auc=%s\n", i, num(cv.fold_auc[i]).c_str());
        std::printf("mean auc=%s\n", num(cv.mean_auc).c_str());
        return 0;
    }

    if (*p_search) {
        const Zone zone = parse_zone(zone_str);
        const auto data = cls::matrix_from_features(load_feature_csv(features), zone);
        const auto res = cls::randomized_search(data, {}, n_candidates, k, seed);
        const auto& b = res.best;
        std::printf(
            "best (candidate %zu): colsample=%s gamma=%s eta=%s max_depth=%d "
            "n_estimators=%d subsample=%s\n",
            res.best_index, num(b.colsample_bytree).c_str(), num(b.gamma).c_str(),
            num(b.eta).c_str(), b.max_depth, b.n_estimators, num(b.subsample).c_str());
        std::printf("mean auc=%s\n", num(res.table[res.best_index].mean_auc).c_str());
        if (!out.empty()) {
            const auto model = cls::train_gbt(data, b, train_seed(seed, "gbt", zone));
            pipe::save_model_file(pipe::wrap_classifier(model), out);
            std::printf("gbt trained on %zu rows -> %s\n", data.x.size(), out.c_str());
        }
        return 0;
    }

    if (*p_eval) {
        const Zone zone = parse_zone(zone_str);
        const auto data = cls::matrix_from_features(load_feature_csv(features), zone);
        std::vector<eval::ModelScores> models;
        for (const auto& path : model_paths) {
            const auto mf = pipe::load_model_file(path);
            if (mf.zone != zone_str)
                throw ValidationError("model " + path + " was trained for zone " + mf.zone +
                                      ", not " + zone_str);
            eval::ModelScores ms;
            ms.kind = mf.kind;
            ms.zone = zone;
            if (mf.kind == "cnn") {
                if (dataset.empty())
                    throw ValidationError("evaluating a cnn model needs --dataset");
                const auto state = pipe::unwrap_net(mf);
                const auto ds = load_dataset(dataset);
                if (ds.samples.size() != data.y.size())
                    throw ValidationError("dataset and feature CSV disagree on sample count");
                ms.scores = net::predict_net(state, t2_patches(ds));
            } else {
                const auto model = pipe::unwrap_classifier(mf);
                ms.scores = cls::predict_proba(model, data.x);
                ms.importances = model.importances;
            }
            models.push_back(std::move(ms));
        }
        const auto report = eval::zone_report(zone, data.y, models, threshold);
        eval::write_zone_report(report, out);
        for (const auto& row : report.rows)
            std::printf("%s: auc=%s ap=%s f1=%s\n", row.kind.c_str(), num(row.roc_auc).c_str(),
                        num(row.pr_auc).c_str(), num(row.f1).c_str());
        std::printf("report -> %s\n", out.c_str());
        return 0;
    }

    if (*p_imp) {
        const auto model = pipe::unwrap_classifier(pipe::load_model_file(model_path));
        const auto imp = cls::feature_importances(model);
        if (out.empty()) {
            std::ostringstream os;
            write_importances_csv(os, imp);
            std::fputs(os.str().c_str(), stdout);
        } else {
            std::ofstream os(out, std::ios::binary);
            if (!os) throw ValidationError("cannot write " + out);
            write_importances_csv(os, imp);
            std::printf("importances -> %s\n", out.c_str());
        }
        return 0;
    }

    if (*p_sal) {
        const auto state = pipe::unwrap_net(pipe::load_model_file(model_path));
        const auto ds = load_dataset(dataset);
        fs::create_directories(out);
        std::ofstream bin(fs::path(out) / "saliency.bin", std::ios::binary);
        std::ofstream idx(fs::path(out) / "saliency.csv", std::ios::binary);
        if (!bin || !idx) throw ValidationError("cannot write to " + out);
        idx << "sample_id,label,index\n";
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            const auto& patch = ds.samples[i].t2;
            const auto map = net::saliency_map(state, patch);
            std::array<float, net::kNetInput * net::kNetInput> row{};
            for (std::size_t p = 0; p < map.size(); ++p) row[p] = float(map[p]);
            bin.write(reinterpret_cast<const char*>(row.data()),
                      std::streamsize(sizeof(float) * row.size()));
            idx << patch.sample_id << ',' << patch.label << ',' << i << '\n';
        }
        std::printf("%zu saliency maps -> %s\n", ds.samples.size(), out.c_str());
        return 0;
    }

    if (*p_run) {
        auto cfg = pipe::load_pipeline_config(config_path);
        if (p_run->count("--seed")) cfg.seed = seed;
        if (p_run->count("--workers")) cfg.workers = workers;
        const auto result = pipe::run_pipeline(cfg);
        for (const auto& s : result.stages) {
            const std::string tag = s.zone.empty() ? s.stage : s.zone + "/" + s.stage;
            std::printf("stage %s: %s\n", tag.c_str(), s.skipped ? "skipped" : "done");
        }
        std::printf("manifest -> %s\n", result.manifest.string().c_str());
        return 0;
    }

    return 2;  // unreachable: require_subcommand guarantees a verb
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    try {
        return dispatch(argc, argv);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ComputeError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace zldc
