#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "zldc/core.hpp"
#include "zldc/rng.hpp"

using namespace zldc;
namespace fs = std::filesystem;

TEST_CASE("zone and modality names round trip, SV rejected") {
    for (Zone z : {Zone::PZ, Zone::TZ, Zone::AS}) CHECK(parse_zone(zone_name(z)) == z);
    CHECK_THROWS_WITH_AS(parse_zone("SV"), "zone 'SV' is excluded and cannot be used",
                         ValidationError);
    CHECK_THROWS_AS(parse_zone("XX"), ValidationError);
    CHECK(patch_size(Modality::T2W) == 16);
    CHECK(patch_size(Modality::ADC) == 6);
}

TEST_CASE("feature names: canonical order and lookups") {
    const auto& names = feature_names();
    REQUIRE(names.size() == kFeatureCount);
    CHECK(names[0] == "t2_p10");
    CHECK(names[4] == "t2_asm");
    CHECK(names[12] == "t2_tamura_roughness");
    CHECK(names[13] == "adc_p10");
    CHECK(names[25] == "adc_tamura_roughness");
    for (std::size_t i = 0; i < names.size(); ++i) CHECK(feature_index(names[i]) == i);
    CHECK_THROWS_AS(feature_index("nope"), ValidationError);
    // schema hash is stable across calls and sensitive to order by construction
    CHECK(feature_schema_hash() == feature_schema_hash());
}

TEST_CASE("make_patch validates") {
    std::vector<float> px(16 * 16, 1.0f);
    auto p = make_patch(std::vector<float>(px), Modality::T2W, Zone::PZ, 1, "c1", "s1");
    CHECK(p.size == 16);
    CHECK(p.at(3, 4) == 1.0f);
    CHECK_THROWS_AS(make_patch(std::vector<float>(10, 0.f), Modality::T2W, Zone::PZ, 0, "c", "s"),
                    ValidationError);
    CHECK_THROWS_AS(make_patch(std::vector<float>(px), Modality::T2W, Zone::PZ, 2, "c", "s"),
                    ValidationError);
    std::vector<float> bad(16 * 16, 0.f);
    bad[7] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(make_patch(std::move(bad), Modality::T2W, Zone::PZ, 0, "c", "s"),
                    ValidationError);
}

namespace {

ZoneDataset tiny_dataset(int n, Zone zone) {
    Rng rng(41, "dataset", 0);
    ZoneDataset ds;
    ds.zone = zone;
    ds.split = Split::Train;
    for (int i = 0; i < n; ++i) {
        auto t2 = oracle::random_patch(rng, Modality::T2W, zone, i % 2, "s" + std::to_string(i));
        auto adc = oracle::random_patch(rng, Modality::ADC, zone, i % 2, "s" + std::to_string(i));
        ds.samples.push_back(make_paired_sample(t2, adc));
    }
    return ds;
}

}  // namespace

TEST_CASE("paired sample enforces pairing") {
    Rng rng(4, "pair", 0);
    auto t2 = oracle::random_patch(rng, Modality::T2W, Zone::PZ, 1, "s0");
    auto adc = oracle::random_patch(rng, Modality::ADC, Zone::PZ, 1, "s0");
    CHECK_NOTHROW(make_paired_sample(t2, adc));
    auto adc_other = oracle::random_patch(rng, Modality::ADC, Zone::PZ, 1, "s1");
    CHECK_THROWS_AS(make_paired_sample(t2, adc_other), ValidationError);  // id mismatch
    auto adc_lbl = adc;
    adc_lbl.label = 0;
    CHECK_THROWS_AS(make_paired_sample(t2, adc_lbl), ValidationError);  // label mismatch
    CHECK_THROWS_AS(make_paired_sample(adc, adc), ValidationError);     // wrong modalities
}

TEST_CASE("dataset container round trips bit-exactly") {
    auto dir = fs::temp_directory_path() / "zldc_core_ds";
    fs::remove_all(dir);
    auto ds = tiny_dataset(8, Zone::TZ);
    save_dataset(ds, dir.string());
    auto back = load_dataset(dir.string());
    CHECK(back.zone == ds.zone);
    CHECK(back.split == ds.split);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(back.samples[i].t2 == ds.samples[i].t2);
        CHECK(back.samples[i].adc == ds.samples[i].adc);
    }

    SUBCASE("corrupted tensor fails the checksum") {
        auto p = dir / "patches_t2.bin";
        auto bytes = read_file_bytes(p.string());
        bytes[17] ^= 0xff;
        write_file_bytes(p.string(), bytes);
        CHECK_THROWS_WITH_AS(load_dataset(dir.string()),
                             "checksum mismatch for patches_t2.bin", ValidationError);
    }
    fs::remove_all(dir);
}

TEST_CASE("empty dataset rejected") {
    ZoneDataset ds;
    ds.zone = Zone::PZ;
    ds.split = Split::Test;
    auto dir = fs::temp_directory_path() / "zldc_core_empty";
    CHECK_THROWS_AS(save_dataset(ds, dir.string()), ValidationError);
}

TEST_CASE("feature csv round trips exactly") {
    Rng rng(11, "csv", 0);
    std::vector<FeatureVector> rows;
    for (int i = 0; i < 20; ++i) {
        FeatureVector fv;
        fv.zone = Zone::AS;
        fv.label = i % 2;
        fv.sample_id = "case:s" + std::to_string(i);
        for (auto& v : fv.values) v = (rng.next_double() - 0.5) * 1e6;
        rows.push_back(fv);
    }
    auto path = (fs::temp_directory_path() / "zldc_feat.csv").string();
    save_feature_csv(rows, path);
    auto back = load_feature_csv(path);
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(back[i].sample_id == rows[i].sample_id);
        CHECK(back[i].label == rows[i].label);
        CHECK(back[i].zone == rows[i].zone);
        for (std::size_t j = 0; j < kFeatureCount; ++j)
            CHECK(back[i].values[j] == rows[i].values[j]);
    }

    SUBCASE("wrong header column count rejected") {
        std::ofstream f(path);
        f << "sample_id,zone,label,onlyone\n";
        f.close();
        CHECK_THROWS_AS(load_feature_csv(path), ValidationError);
    }
    fs::remove(path);
}
