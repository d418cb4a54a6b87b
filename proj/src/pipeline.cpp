#include "zldc/pipeline.hpp"

#include <algorithm>
#include <set>

#include "zldc/evaluation.hpp"
#include "zldc/rng.hpp"
#include "zldc/texture.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace zldc {
namespace pipe {

// ---- configuration ---------------------------------------------------------

void validate_pipeline_config(const PipelineConfig& cfg) {
    if (cfg.corpus.empty()) throw ValidationError("config needs a corpus directory");
    if (cfg.workdir.empty()) throw ValidationError("config needs a workdir");
    if (cfg.zones.empty()) throw ValidationError("config lists no zones");
    std::set<Zone> seen;
    for (Zone z : cfg.zones)
        if (!seen.insert(z).second)
            throw ValidationError("zone " + zone_name(z) + " listed twice");
    if (cfg.workers < 1) throw ValidationError("workers must be at least 1");
    standardize::validate_config(cfg.standardizer);
    sampler::validate_sampler_config(cfg.sampler);
    const auto& cl = cfg.classifiers;
    if (!(cl.logreg_lambda >= 0.0) || !std::isfinite(cl.logreg_lambda))
        throw ValidationError("logreg_lambda must be non-negative");
    if (!(cl.svm_c > 0.0)) throw ValidationError("svm_c must be positive");
    if (cl.svm_gamma < 0.0) throw ValidationError("svm_gamma must be non-negative");
    if (cl.rf_trees < 1) throw ValidationError("rf_trees must be positive");
    if (!cl.gbt_zone_defaults) cls::validate_hyperparams(cl.gbt);
    net::validate_config(cfg.net.config);
    if (!(cfg.eval.threshold >= 0.0 && cfg.eval.threshold <= 1.0))
        throw ValidationError("eval threshold must lie in [0,1]");
}

namespace {

cls::GbtHyperparams gbt_from_json(const json& j) {
    cls::GbtHyperparams hp;
    if (j.contains("colsample_bytree")) hp.colsample_bytree = j.at("colsample_bytree").get<double>();
    if (j.contains("gamma")) hp.gamma = j.at("gamma").get<double>();
    if (j.contains("eta")) hp.eta = j.at("eta").get<double>();
    if (j.contains("max_depth")) hp.max_depth = j.at("max_depth").get<int>();
    if (j.contains("n_estimators")) hp.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("subsample")) hp.subsample = j.at("subsample").get<double>();
    return hp;
}

json gbt_to_json(const cls::GbtHyperparams& hp) {
    return {{"colsample_bytree", hp.colsample_bytree}, {"gamma", hp.gamma},
            {"eta", hp.eta},                           {"max_depth", hp.max_depth},
            {"n_estimators", hp.n_estimators},         {"subsample", hp.subsample}};
}

net::NetConfig net_config_from_json(const json& j) {
    net::NetConfig c;
    if (j.contains("lr")) c.lr = j.at("lr").get<double>();
    if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
    if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
    if (j.contains("eps")) c.eps = j.at("eps").get<double>();
    if (j.contains("dropout")) c.dropout = j.at("dropout").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
    if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

json net_config_to_json(const net::NetConfig& c) {
    return {{"lr", c.lr},           {"beta1", c.beta1},
            {"beta2", c.beta2},     {"eps", c.eps},
            {"dropout", c.dropout}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},   {"seed", c.seed}};
}

}  // namespace

PipelineConfig pipeline_config_from_json(const json& j) {
    try {
        PipelineConfig cfg;
        cfg.corpus = j.at("corpus").get<std::string>();
        cfg.workdir = j.at("workdir").get<std::string>();
        if (j.contains("zones")) {
            cfg.zones.clear();
            for (const auto& z : j.at("zones")) cfg.zones.push_back(parse_zone(z.get<std::string>()));
        }
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("workers")) cfg.workers = j.at("workers").get<unsigned>();
        if (j.contains("standardizer")) {
            const auto& s = j.at("standardizer");
            if (s.contains("cutoff_low")) cfg.standardizer.cutoff_low = s.at("cutoff_low").get<double>();
            if (s.contains("cutoff_high"))
                cfg.standardizer.cutoff_high = s.at("cutoff_high").get<double>();
            if (s.contains("landmarks"))
                cfg.standardizer.landmark_percentiles =
                    s.at("landmarks").get<std::vector<double>>();
            if (s.contains("s_min")) cfg.standardizer.s_min = s.at("s_min").get<double>();
            if (s.contains("s_max")) cfg.standardizer.s_max = s.at("s_max").get<double>();
        }
        if (j.contains("sampler")) {
            const auto& s = j.at("sampler");
            if (s.contains("neg_per_pos")) cfg.sampler.neg_per_pos = s.at("neg_per_pos").get<int>();
            if (s.contains("t2_exclusion")) cfg.sampler.t2_exclusion = s.at("t2_exclusion").get<int>();
            if (s.contains("adc_exclusion"))
                cfg.sampler.adc_exclusion = s.at("adc_exclusion").get<int>();
        }
        if (j.contains("classifiers")) {
            const auto& c = j.at("classifiers");
            if (c.contains("logreg_lambda"))
                cfg.classifiers.logreg_lambda = c.at("logreg_lambda").get<double>();
            if (c.contains("svm_c")) cfg.classifiers.svm_c = c.at("svm_c").get<double>();
            if (c.contains("svm_gamma")) cfg.classifiers.svm_gamma = c.at("svm_gamma").get<double>();
            if (c.contains("rf_trees")) cfg.classifiers.rf_trees = c.at("rf_trees").get<int>();
            if (c.contains("gbt")) {
                if (c.at("gbt").is_string()) {
                    if (c.at("gbt").get<std::string>() != "zone_defaults")
                        throw ValidationError("classifiers.gbt must be \"zone_defaults\" or an object");
                    cfg.classifiers.gbt_zone_defaults = true;
                } else {
                    cfg.classifiers.gbt_zone_defaults = false;
                    cfg.classifiers.gbt = gbt_from_json(c.at("gbt"));
                }
            }
        }
        if (j.contains("net")) {
            const auto& n = j.at("net");
            if (n.contains("enabled")) cfg.net.enabled = n.at("enabled").get<bool>();
            cfg.net.config = net_config_from_json(n);
        }
        if (j.contains("eval") && j.at("eval").contains("threshold"))
            cfg.eval.threshold = j.at("eval").at("threshold").get<double>();
        validate_pipeline_config(cfg);
        return cfg;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed pipeline config: ") + e.what());
    }
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
    json zones = json::array();
    for (Zone z : cfg.zones) zones.push_back(zone_name(z));
    json j = {
        {"corpus", cfg.corpus},
        {"workdir", cfg.workdir},
        {"zones", zones},
        {"seed", cfg.seed},
        {"workers", cfg.workers},
        {"standardizer",
         {{"cutoff_low", cfg.standardizer.cutoff_low},
          {"cutoff_high", cfg.standardizer.cutoff_high},
          {"landmarks", cfg.standardizer.landmark_percentiles},
          {"s_min", cfg.standardizer.s_min},
          {"s_max", cfg.standardizer.s_max}}},
        {"sampler",
         {{"neg_per_pos", cfg.sampler.neg_per_pos},
          {"t2_exclusion", cfg.sampler.t2_exclusion},
          {"adc_exclusion", cfg.sampler.adc_exclusion}}},
        {"classifiers",
         {{"logreg_lambda", cfg.classifiers.logreg_lambda},
          {"svm_c", cfg.classifiers.svm_c},
          {"svm_gamma", cfg.classifiers.svm_gamma},
          {"rf_trees", cfg.classifiers.rf_trees}}},
        {"net", net_config_to_json(cfg.net.config)},
        {"eval", {{"threshold", cfg.eval.threshold}}},
    };
    j["classifiers"]["gbt"] =
        cfg.classifiers.gbt_zone_defaults ? json("zone_defaults") : gbt_to_json(cfg.classifiers.gbt);
    j["net"]["enabled"] = cfg.net.enabled;
    return j;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file_text(path));
    } catch (const json::exception& e) {
        throw ValidationError("cannot parse config " + path.string() + ": " + e.what());
    }
    return pipeline_config_from_json(j);
}

// ---- model container --------------------------------------------------------

void save_model_file(const ModelFile& mf, const fs::path& path) {
    json j = {{"magic", kModelMagic},
              {"kind", mf.kind},
              {"version", mf.version},
              {"metadata",
               {{"zone", mf.zone},
                {"seed", mf.seed},
                {"hyperparameters", mf.hyperparams},
                {"feature_schema_hash", to_hex(mf.schema_hash)}}},
              {"payload", mf.payload}};
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_text(path, j.dump());
}

ModelFile load_model_file(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file_text(path));
    } catch (const json::exception&) {
        throw ValidationError("not a model file (invalid JSON): " + path.string());
    }
    try {
        ModelFile mf;
        if (!j.contains("magic") || j.at("magic").get<std::string>() != kModelMagic)
            throw ValidationError("not a model file (bad magic): " + path.string());
        mf.version = j.at("version").get<int>();
        if (mf.version != kModelVersion)
            throw ValidationError("unsupported model file version " +
                                  std::to_string(mf.version));
        mf.kind = j.at("kind").get<std::string>();
        const auto& md = j.at("metadata");
        mf.zone = md.at("zone").get<std::string>();
        mf.seed = md.at("seed").get<std::uint64_t>();
        for (auto it = md.at("hyperparameters").begin(); it != md.at("hyperparameters").end();
             ++it)
            mf.hyperparams[it.key()] = it.value().get<double>();
        mf.schema_hash = std::stoull(md.at("feature_schema_hash").get<std::string>(), nullptr, 16);
        mf.payload = j.at("payload");
        return mf;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed model file: ") + e.what());
    }
}

ModelFile wrap_classifier(const cls::TrainedModel& model) {
    ModelFile mf;
    mf.kind = cls::kind_name(model.kind);
    mf.zone = zone_name(model.zone);
    mf.seed = model.seed;
    mf.hyperparams = model.hyperparams;
    mf.schema_hash = feature_schema_hash();
    mf.payload = json::parse(cls::model_payload(model));
    return mf;
}

cls::TrainedModel unwrap_classifier(const ModelFile& mf) {
    cls::parse_kind(mf.kind);  // rejects non-classifier kinds
    if (mf.schema_hash != feature_schema_hash())
        throw ValidationError("feature schema mismatch between model and this build");
    return cls::model_from_payload(mf.payload.dump());
}

ModelFile wrap_net(const net::NetState& state, Zone zone) {
    ModelFile mf;
    mf.kind = "cnn";
    mf.zone = zone_name(zone);
    mf.seed = state.cfg.seed;
    mf.hyperparams = {{"lr", state.cfg.lr},
                      {"dropout", state.cfg.dropout},
                      {"batch_size", double(state.cfg.batch_size)},
                      {"epochs", double(state.cfg.epochs)}};
    mf.schema_hash = feature_schema_hash();
    mf.payload = json::parse(net::net_payload(state));
    return mf;
}

net::NetState unwrap_net(const ModelFile& mf) {
    if (mf.kind != "cnn") throw ValidationError("model file is not a cnn model");
    if (mf.schema_hash != feature_schema_hash())
        throw ValidationError("feature schema mismatch between model and this build");
    return net::net_from_payload(mf.payload.dump());
}

ModelFile wrap_standardizer(const standardize::StandardizationModel& model) {
    ModelFile mf;
    mf.kind = "standardizer.v1";
    mf.zone = "";
    mf.schema_hash = feature_schema_hash();
    mf.payload = {{"config",
                   {{"cutoff_low", model.config.cutoff_low},
                    {"cutoff_high", model.config.cutoff_high},
                    {"landmarks", model.config.landmark_percentiles},
                    {"s_min", model.config.s_min},
                    {"s_max", model.config.s_max}}},
                  {"mean_landmarks", model.mean_landmarks}};
    return mf;
}

standardize::StandardizationModel unwrap_standardizer(const ModelFile& mf) {
    if (mf.kind != "standardizer.v1")
        throw ValidationError("model file is not a standardizer record");
    try {
        standardize::StandardizationModel m;
        const auto& c = mf.payload.at("config");
        m.config.cutoff_low = c.at("cutoff_low").get<double>();
        m.config.cutoff_high = c.at("cutoff_high").get<double>();
        m.config.landmark_percentiles = c.at("landmarks").get<std::vector<double>>();
        m.config.s_min = c.at("s_min").get<double>();
        m.config.s_max = c.at("s_max").get<double>();
        m.mean_landmarks = mf.payload.at("mean_landmarks").get<std::vector<double>>();
        return m;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("malformed standardizer payload: ") + e.what());
    }
}

// ---- pipeline ----------------------------------------------------------------

namespace {

// Content hash of a file tree: relative paths + bytes, in sorted path order.
std::uint64_t hash_tree(const fs::path& root) {
    if (!fs::exists(root)) throw ValidationError("missing input path: " + root.string());
    std::vector<fs::path> files;
    if (fs::is_directory(root)) {
        for (const auto& e : fs::recursive_directory_iterator(root))
            if (e.is_regular_file()) files.push_back(e.path());
    } else {
        files.push_back(root);
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = fnv1a64("tree");
    for (const auto& f : files) {
        const std::string rel = fs::relative(f, root).generic_string();
        h = mix64(h ^ fnv1a64(rel));
        h = mix64(h ^ hash_file(f));
    }
    return h;
}

std::uint64_t hash_text(std::uint64_t h, std::string_view text) {
    return mix64(h ^ fnv1a64(text));
}

struct StageRunner {
    const PipelineConfig& cfg;
    fs::path work;
    std::vector<StageStatus> statuses;

    fs::path stamp_path(const std::string& zone, const std::string& stage) const {
        return work / "stamps" / ((zone.empty() ? "corpus" : zone) + "_" + stage + ".json");
    }

    // Runs `body` unless the stamp matches `input_hash` and every output
    // exists. Errors come back tagged with the stage name.
    template <typename F>
    void stage(const std::string& zone, const std::string& name, std::uint64_t input_hash,
               const std::vector<fs::path>& outputs, F&& body) {
        const fs::path stamp = stamp_path(zone, name);
        bool skip = false;
        if (fs::exists(stamp)) {
            try {
                const auto j = json::parse(read_file_text(stamp));
                skip = j.at("input_hash").get<std::string>() == to_hex(input_hash);
            } catch (...) {
                skip = false;
            }
            for (const auto& out : outputs)
                if (!fs::exists(out)) skip = false;
        }
        const std::string tag = (zone.empty() ? name : zone + "/" + name);
        if (!skip) {
            try {
                body();
            } catch (const ValidationError& e) {
                throw ValidationError("stage " + tag + ": " + e.what());
            } catch (const ComputeError& e) {
                throw ComputeError("stage " + tag + ": " + e.what());
            } catch (const std::exception& e) {
                throw ComputeError("stage " + tag + ": " + e.what());
            }
            fs::create_directories(stamp.parent_path());
            write_file_text(stamp, json({{"input_hash", to_hex(input_hash)}}).dump());
        }
        statuses.push_back({zone, name, skip});
    }
};

std::vector<Patch> t2_patches(const ZoneDataset& ds) {
    std::vector<Patch> out;
    out.reserve(ds.samples.size());
    for (const auto& s : ds.samples) out.push_back(s.t2);
    return out;
}

}  // namespace

RunResult run_pipeline(const PipelineConfig& cfg) {
    validate_pipeline_config(cfg);
    const fs::path corpus = cfg.corpus;
    const fs::path work = cfg.workdir;
    if (!fs::is_directory(corpus / "train") || !fs::is_directory(corpus / "test"))
        throw ValidationError("corpus must contain train/ and test/ directories");
    fs::create_directories(work);

    const json cfg_echo = pipeline_config_to_json(cfg);
    StageRunner runner{cfg, work, {}};

    // Corpus-wide standardization: fit on training T2 images, apply to both
    // splits, leave ADC untouched.
    const fs::path std_dir = work / "standardized";
    const fs::path std_model_path = work / "models" / "standardizer.zldc";
    {
        std::uint64_t h = hash_tree(corpus);
        h = hash_text(h, cfg_echo.at("standardizer").dump());
        runner.stage("", "standardize", h, {std_dir / "train", std_dir / "test", std_model_path},
                     [&]() {
                         auto train_cases = sampler::load_corpus((corpus / "train").string());
                         auto test_cases = sampler::load_corpus((corpus / "test").string());
                         std::vector<Image> t2s;
                         t2s.reserve(train_cases.size());
                         for (const auto& c : train_cases) t2s.push_back(c.t2);
                         const auto model = standardize::fit_standardizer(t2s, cfg.standardizer);
                         for (auto* cases : {&train_cases, &test_cases})
                             for (auto& c : *cases)
                                 c.t2 = standardize::apply_standardizer(model, c.t2);
                         sampler::save_corpus(train_cases, (std_dir / "train").string());
                         sampler::save_corpus(test_cases, (std_dir / "test").string());
                         save_model_file(wrap_standardizer(model), std_model_path);
                     });
    }

    for (Zone zone : cfg.zones) {
        const std::string zn = zone_name(zone);
        const fs::path zdir = work / zn;
        const fs::path ds_train = zdir / "dataset" / "train";
        const fs::path ds_test = zdir / "dataset" / "test";
        const fs::path feat_train = zdir / "features_train.csv";
        const fs::path feat_test = zdir / "features_test.csv";
        const fs::path models_dir = zdir / "models";
        const fs::path report_dir = zdir / "report";

        // sample: standardized corpus -> per-zone paired-patch datasets
        {
            std::uint64_t h = hash_tree(std_dir);
            h = hash_text(h, cfg_echo.at("sampler").dump());
            h = hash_text(h, zn + ":" + std::to_string(cfg.seed));
            runner.stage(zn, "sample", h, {ds_train, ds_test}, [&]() {
                sampler::SamplerConfig scfg = cfg.sampler;
                for (auto [split, dir, sub] :
                     {std::tuple{Split::Train, ds_train, "train"},
                      std::tuple{Split::Test, ds_test, "test"}}) {
                    scfg.seed = derive_stream(cfg.seed, "sample:" + split_name(split) + ":" + zn);
                    const auto cases = sampler::load_corpus((std_dir / sub).string());
                    const auto ds =
                        sampler::build_zone_dataset(cases, zone, scfg, split, int(cfg.workers));
                    save_dataset(ds, dir);
                }
            });
        }

        // extract: datasets -> feature CSVs
        {
            std::uint64_t h = mix64(hash_tree(ds_train) ^ hash_tree(ds_test));
            runner.stage(zn, "extract", h, {feat_train, feat_test}, [&]() {
                for (auto [dir, out] : {std::pair{ds_train, feat_train}, {ds_test, feat_test}}) {
                    const auto ds = load_dataset(dir);
                    save_feature_csv(texture::extract_features_batch(ds, cfg.workers), out);
                }
            });
        }

        // train: feature CSVs -> model files (plus the cnn on raw patches)
        std::vector<fs::path> model_paths = {
            models_dir / "logreg_l1.zldc", models_dir / "svm_rbf.zldc",
            models_dir / "random_forest.zldc", models_dir / "gbt.zldc"};
        if (cfg.net.enabled) model_paths.push_back(models_dir / "cnn.zldc");
        {
            std::uint64_t h = hash_tree(feat_train);
            if (cfg.net.enabled) h = mix64(h ^ hash_tree(ds_train));
            h = hash_text(h, cfg_echo.at("classifiers").dump());
            h = hash_text(h, cfg_echo.at("net").dump());
            h = hash_text(h, std::to_string(cfg.seed));
            runner.stage(zn, "train", h, model_paths, [&]() {
                const auto rows = load_feature_csv(feat_train);
                const auto data = cls::matrix_from_features(rows, zone);
                const auto& cl = cfg.classifiers;

                auto logreg = cls::train_logreg_l1(data, cl.logreg_lambda);
                logreg.seed = derive_stream(cfg.seed, "train:logreg_l1:" + zn);
                save_model_file(wrap_classifier(logreg), models_dir / "logreg_l1.zldc");

                auto svm = cls::train_svm_rbf(data, cl.svm_c, cl.svm_gamma);
                svm.seed = derive_stream(cfg.seed, "train:svm_rbf:" + zn);
                save_model_file(wrap_classifier(svm), models_dir / "svm_rbf.zldc");

                const auto rf = cls::train_random_forest(
                    data, cl.rf_trees, derive_stream(cfg.seed, "train:random_forest:" + zn),
                    cfg.workers);
                save_model_file(wrap_classifier(rf), models_dir / "random_forest.zldc");

                const auto hp = cl.gbt_zone_defaults ? cls::gbt_defaults(zone) : cl.gbt;
                const auto gbt =
                    cls::train_gbt(data, hp, derive_stream(cfg.seed, "train:gbt:" + zn));
                save_model_file(wrap_classifier(gbt), models_dir / "gbt.zldc");

                if (cfg.net.enabled) {
                    net::NetConfig ncfg = cfg.net.config;
                    ncfg.seed = derive_stream(cfg.seed, "train:cnn:" + zn);
                    const auto ds = load_dataset(ds_train);
                    const auto run = net::train_net(ncfg, t2_patches(ds));
                    save_model_file(wrap_net(run.state, zone), models_dir / "cnn.zldc");
                }
            });
        }

        // evaluate: models + held-out features -> report tables and curves
        {
            std::uint64_t h = hash_tree(feat_test);
            for (const auto& mp : model_paths) h = mix64(h ^ hash_tree(mp));
            if (cfg.net.enabled) h = mix64(h ^ hash_tree(ds_test));
            h = hash_text(h, cfg_echo.at("eval").dump());
            runner.stage(zn, "evaluate", h, {report_dir / "report.csv", report_dir / "report.json"},
                         [&]() {
                             const auto rows = load_feature_csv(feat_test);
                             const auto data = cls::matrix_from_features(rows, zone);
                             std::vector<eval::ModelScores> models;
                             for (const char* kind :
                                  {"logreg_l1", "svm_rbf", "random_forest", "gbt"}) {
                                 const auto mf = load_model_file(models_dir /
                                                                 (std::string(kind) + ".zldc"));
                                 const auto model = unwrap_classifier(mf);
                                 eval::ModelScores ms;
                                 ms.kind = kind;
                                 ms.zone = model.zone;
                                 ms.scores = cls::predict_proba(model, data.x);
                                 ms.importances = model.importances;
                                 models.push_back(std::move(ms));
                             }
                             if (cfg.net.enabled) {
                                 const auto mf = load_model_file(models_dir / "cnn.zldc");
                                 const auto state = unwrap_net(mf);
                                 const auto ds = load_dataset(ds_test);
                                 eval::ModelScores ms;
                                 ms.kind = "cnn";
                                 ms.zone = zone;
                                 ms.scores = net::predict_net(state, t2_patches(ds));
                                 models.push_back(std::move(ms));
                             }
                             const auto report = eval::zone_report(zone, data.y, models,
                                                                   cfg.eval.threshold);
                             eval::write_zone_report(report, report_dir);
                         });
        }
    }

    // Run manifest: config echo (defaults included) plus stage statuses.
    json stages = json::array();
    for (const auto& s : runner.statuses)
        stages.push_back({{"zone", s.zone}, {"stage", s.stage}, {"skipped", s.skipped}});
    const json manifest = {{"config", cfg_echo}, {"stages", stages}};
    const fs::path manifest_path = work / "manifest.json";
    write_file_text(manifest_path, manifest.dump(2));

    return {std::move(runner.statuses), manifest_path};
}

}  // namespace pipe
}  // namespace zldc
