#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "zldc/classifiers.hpp"
#include "zldc/core.hpp"
#include "zldc/micronet.hpp"
#include "zldc/sampler.hpp"
#include "zldc/standardizer.hpp"

namespace zldc {
namespace pipe {

// ---- configuration -------------------------------------------------------

struct ClassifierSection {
    double logreg_lambda = 0.01;
    double svm_c = 0.05;
    double svm_gamma = 0.0;  // 0 selects the scale heuristic
    int rf_trees = 300;
    bool gbt_zone_defaults = true;  // false: use `gbt` below for every zone
    cls::GbtHyperparams gbt{};
};

struct NetSection {
    bool enabled = false;
    net::NetConfig config;
};

struct EvalSection {
    double threshold = 0.5;
};

struct PipelineConfig {
    std::string corpus;   // root directory holding train/ and test/
    std::string workdir;  // all artifacts land here
    std::vector<Zone> zones = {Zone::PZ, Zone::TZ, Zone::AS};
    std::uint64_t seed = 0;
    unsigned workers = 1;
    standardize::StandardizationConfig standardizer;
    sampler::SamplerConfig sampler;  // its seed field is derived from `seed`
    ClassifierSection classifiers;
    NetSection net;
    EvalSection eval;
};

void validate_pipeline_config(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const nlohmann::json& j);
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

// ---- model container ------------------------------------------------------
// JSON file: {"magic":"ZLDC1","kind":...,"version":1,"metadata":{...},
// "payload":{...}}. The metadata carries zone, seed, hyperparameters and the
// feature schema hash, which must match this build's schema at predict time.

inline constexpr const char* kModelMagic = "ZLDC1";
inline constexpr int kModelVersion = 1;

struct ModelFile {
    std::string kind;  // logreg_l1 | svm_rbf | random_forest | gbt | cnn | standardizer.v1
    int version = kModelVersion;
    std::string zone;  // empty for zone-free records (standardizer)
    std::uint64_t seed = 0;
    std::map<std::string, double> hyperparams;
    std::uint64_t schema_hash = 0;
    nlohmann::json payload;
};

void save_model_file(const ModelFile& mf, const std::filesystem::path& path);
ModelFile load_model_file(const std::filesystem::path& path);

ModelFile wrap_classifier(const cls::TrainedModel& model);
// Checks kind and the feature schema hash; the returned model is ready to
// predict on this build's 26-feature rows.
cls::TrainedModel unwrap_classifier(const ModelFile& mf);

ModelFile wrap_net(const net::NetState& state, Zone zone);
net::NetState unwrap_net(const ModelFile& mf);

ModelFile wrap_standardizer(const standardize::StandardizationModel& model);
standardize::StandardizationModel unwrap_standardizer(const ModelFile& mf);

// ---- pipeline -------------------------------------------------------------

struct StageStatus {
    std::string zone;   // empty for corpus-wide stages
    std::string stage;  // standardize | sample | extract | train | evaluate
    bool skipped = false;
};

struct RunResult {
    std::vector<StageStatus> stages;
    std::filesystem::path manifest;
};

// Executes standardize -> sample -> extract -> train -> evaluate per zone,
// writing artifacts under cfg.workdir. Stages whose inputs (content hash)
// are unchanged are skipped. Any stage failure is rethrown with a
// "stage <zone>/<name>:" prefix. Deterministic in (config, seed) for any
// worker count.
RunResult run_pipeline(const PipelineConfig& cfg);

}  // namespace pipe
}  // namespace zldc
