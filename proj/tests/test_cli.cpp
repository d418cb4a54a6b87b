#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <sys/wait.h>

#include "zldc/pipeline.hpp"
#include "zldc/util.hpp"

using namespace zldc;
namespace fs = std::filesystem;

// Exercises the installed binary end to end through its verbs; every test
// shells out to the executable the build produced.

namespace {

fs::path scratch(const std::string& tag) {
    auto d = fs::temp_directory_path() / ("zldc_cli_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

int run(const std::string& args, const fs::path& log = {}) {
    std::string cmd = std::string(ZLDC_CLI_PATH) + " " + args;
    if (!log.empty())
        cmd += " >" + log.string() + " 2>&1";
    else
        cmd += " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

// lesioned cases per zone small enough to keep the suite quick
void write_tiny_phantom_config(const fs::path& path, std::uint64_t seed) {
    write_file_text(path, std::string(R"({
      "counts": {"train": {"PZ": 6, "TZ": 2, "AS": 2}, "test": {"PZ": 3, "TZ": 1, "AS": 1}},
      "clean_cases": {"train": 2, "test": 1},
      "seed": )") + std::to_string(seed) +
                              "}");
}

}  // namespace

TEST_CASE("usage errors exit 2 and help exits 0") {
    CHECK(run("") == 2);
    CHECK(run("frobnicate") == 2);
    CHECK(run("sample --zone PZ") == 2);  // missing required flags
    CHECK(run("--help") == 0);
    CHECK(run("train --help") == 0);
}

TEST_CASE("verb chain reproduces the pipeline byte for byte") {
    const auto dir = scratch("chain");
    const auto corpus = (dir / "corpus").string();
    write_tiny_phantom_config(dir / "phantom.json", 5);
    REQUIRE(run("phantom --config " + (dir / "phantom.json").string() + " --out " + corpus +
                " --workers 4") == 0);

    // full pipeline over the same corpus
    const auto work = dir / "work";
    write_file_text(dir / "cfg.json", std::string("{\"corpus\": \"") + corpus +
                                          "\", \"workdir\": \"" + work.string() +
                                          "\", \"zones\": [\"PZ\"], \"seed\": 11, "
                                          "\"workers\": 4, \"classifiers\": {\"rf_trees\": 20}}");
    const auto run_log = dir / "run.log";
    REQUIRE(run("run --config " + (dir / "cfg.json").string(), run_log) == 0);
    CHECK(read_file_text(run_log).find("stage PZ/train: done") != std::string::npos);

    // the same stages driven by hand, same seed
    const auto model = (dir / "std.zldc").string();
    REQUIRE(run("standardize fit --corpus " + corpus + "/train --out " + model) == 0);
    REQUIRE(run("standardize apply --corpus " + corpus + "/train --model " + model + " --out " +
                (dir / "st_train").string()) == 0);
    REQUIRE(run("standardize apply --corpus " + corpus + "/test --model " + model + " --out " +
                (dir / "st_test").string()) == 0);
    REQUIRE(run("sample --corpus " + (dir / "st_train").string() +
                " --zone PZ --split train --seed 11 --workers 2 --out " +
                (dir / "ds_train").string()) == 0);
    REQUIRE(run("sample --corpus " + (dir / "st_test").string() +
                " --zone PZ --split test --seed 11 --out " + (dir / "ds_test").string()) == 0);
    REQUIRE(run("extract --dataset " + (dir / "ds_train").string() + " --workers 2 --out " +
                (dir / "train.csv").string()) == 0);
    REQUIRE(run("extract --dataset " + (dir / "ds_test").string() + " --out " +
                (dir / "test.csv").string()) == 0);

    CHECK(read_file_bytes(dir / "train.csv") == read_file_bytes(work / "PZ" / "features_train.csv"));
    CHECK(read_file_bytes(dir / "test.csv") == read_file_bytes(work / "PZ" / "features_test.csv"));

    // train, evaluate, importances on the hand-driven artifacts
    const auto gbt = (dir / "gbt.zldc").string();
    const auto rf = (dir / "rf.zldc").string();
    REQUIRE(run("train --features " + (dir / "train.csv").string() +
                " --zone PZ --model gbt --seed 11 --out " + gbt) == 0);
    REQUIRE(run("train --features " + (dir / "train.csv").string() +
                " --zone PZ --model random_forest --trees 20 --seed 11 --out " + rf) == 0);
    CHECK(read_file_bytes(gbt) == read_file_bytes(work / "PZ" / "models" / "gbt.zldc"));
    CHECK(read_file_bytes(rf) == read_file_bytes(work / "PZ" / "models" / "random_forest.zldc"));

    const auto eval_log = dir / "eval.log";
    REQUIRE(run("evaluate --features " + (dir / "test.csv").string() +
                " --zone PZ --model " + gbt + " --model " + rf + " --out " +
                (dir / "report").string(),
                eval_log) == 0);
    const auto eval_out = read_file_text(eval_log);
    CHECK(eval_out.find("gbt: auc=") != std::string::npos);
    CHECK(eval_out.find("random_forest: auc=") != std::string::npos);
    CHECK(fs::exists(dir / "report" / "report.csv"));
    CHECK(fs::exists(dir / "report" / "roc_gbt.csv"));

    const auto imp_log = dir / "imp.log";
    REQUIRE(run("importances --model " + gbt, imp_log) == 0);
    CHECK(read_file_text(imp_log).rfind("rank,feature,importance\n", 0) == 0);
    REQUIRE(run("importances --model " + gbt + " --out " + (dir / "imp.csv").string()) == 0);
    CHECK(read_file_text(dir / "imp.csv").rfind("rank,feature,importance\n", 0) == 0);

    SUBCASE("rerunning the pipeline skips every stage") {
        const auto log2 = dir / "rerun.log";
        REQUIRE(run("run --config " + (dir / "cfg.json").string(), log2) == 0);
        const auto text = read_file_text(log2);
        CHECK(text.find("stage standardize: skipped") != std::string::npos);
        CHECK(text.find("done") == std::string::npos);
    }
    SUBCASE("cv prints per-fold and mean scores") {
        const auto cv_log = dir / "cv.log";
        REQUIRE(run("cv --features " + (dir / "train.csv").string() +
                    " --zone PZ --model logreg_l1 --k 3 --seed 11",
                    cv_log) == 0);
        const auto text = read_file_text(cv_log);
        CHECK(text.find("fold 2:") != std::string::npos);
        CHECK(text.find("mean auc=") != std::string::npos);
    }
    SUBCASE("search reports the best candidate") {
        const auto s_log = dir / "search.log";
        REQUIRE(run("search --features " + (dir / "train.csv").string() +
                    " --zone PZ --n 3 --k 3 --seed 11 --out " + (dir / "best.zldc").string(),
                    s_log) == 0);
        CHECK(read_file_text(s_log).find("best (candidate ") != std::string::npos);
        CHECK(fs::exists(dir / "best.zldc"));
    }
    SUBCASE("evaluate rejects a model trained for another zone") {
        REQUIRE(run("sample --corpus " + (dir / "st_train").string() +
                    " --zone TZ --split train --seed 11 --out " + (dir / "ds_tz").string()) == 0);
        REQUIRE(run("extract --dataset " + (dir / "ds_tz").string() + " --out " +
                    (dir / "tz.csv").string()) == 0);
        CHECK(run("evaluate --features " + (dir / "tz.csv").string() + " --zone TZ --model " +
                  gbt + " --out " + (dir / "r2").string()) == 2);
    }
    SUBCASE("cnn training and saliency") {
        const auto cnn = (dir / "cnn.zldc").string();
        REQUIRE(run("train --dataset " + (dir / "ds_train").string() +
                    " --zone PZ --model cnn --epochs 1 --seed 11 --out " + cnn) == 0);
        REQUIRE(run("saliency --model " + cnn + " --dataset " + (dir / "ds_test").string() +
                    " --out " + (dir / "sal").string()) == 0);
        const auto ds = load_dataset(dir / "ds_test");
        CHECK(fs::file_size(dir / "sal" / "saliency.bin") == ds.samples.size() * 256 * 4);
        const auto idx = read_file_text(dir / "sal" / "saliency.csv");
        CHECK(idx.rfind("sample_id,label,index\n", 0) == 0);

        SUBCASE("evaluate scores the cnn alongside feature models") {
            REQUIRE(run("evaluate --features " + (dir / "test.csv").string() +
                        " --zone PZ --model " + gbt + " --model " + cnn + " --dataset " +
                        (dir / "ds_test").string() + " --out " + (dir / "r3").string()) == 0);
            CHECK(fs::exists(dir / "r3" / "roc_cnn.csv"));
        }
        SUBCASE("divergent training reports a numeric error") {
            // epoch 1 still reports the pre-update losses; the exploded
            // weights only reach a forward pass from epoch 2 on
            CHECK(run("train --dataset " + (dir / "ds_train").string() +
                      " --zone PZ --model cnn --epochs 2 --lr 1e300 --seed 11 --out " +
                      (dir / "x.zldc").string()) == 3);
        }
    }
}

TEST_CASE("the excluded zone is rejected up front") {
    const auto dir = scratch("sv");
    CHECK(run("sample --corpus " + dir.string() + " --zone SV --split train --out " +
              (dir / "ds").string()) == 2);
    write_file_text(dir / "cfg.json",
                    "{\"corpus\": \"c\", \"workdir\": \"w\", \"zones\": [\"SV\"]}");
    const auto log = dir / "sv.log";
    CHECK(run("run --config " + (dir / "cfg.json").string(), log) == 2);
    CHECK(read_file_text(log).find("zone 'SV' is excluded and cannot be used") !=
          std::string::npos);
}

TEST_CASE("missing inputs exit 2") {
    const auto dir = scratch("missing");
    CHECK(run("extract --dataset " + (dir / "absent").string() + " --out " +
              (dir / "f.csv").string()) == 2);
    CHECK(run("importances --model " + (dir / "absent.zldc").string()) == 2);
    CHECK(run("run --config " + (dir / "absent.json").string()) == 2);
}
