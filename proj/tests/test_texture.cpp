#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "zldc/texture.hpp"

using namespace zldc;
using namespace zldc::texture;

namespace {

Image image_of(std::vector<double> v, int rows, int cols) {
    Image img;
    img.rows = rows;
    img.cols = cols;
    img.v = std::move(v);
    return img;
}

}  // namespace

TEST_CASE("quantize: two-point range, constant, full range") {
    auto q = quantize_patch(image_of({0, 255, 0, 255}, 2, 2), 2);
    CHECK(q == std::vector<int>{0, 1, 0, 1});

    auto c = quantize_patch(image_of({5, 5, 5, 5}, 2, 2), 32);
    CHECK(c == std::vector<int>{0, 0, 0, 0});

    Rng rng(3, "quant", 0);
    auto img = oracle::random_image(rng, 16, 16, -10, 10);
    auto q32 = quantize_patch(img, 32);
    int mx = 0;
    for (std::size_t i = 0; i < q32.size(); ++i) {
        CHECK(q32[i] >= 0);
        CHECK(q32[i] <= 31);
        mx = std::max(mx, q32[i]);
        // max intensity maps to the top level
        if (img.v[i] == *std::max_element(img.v.begin(), img.v.end())) CHECK(q32[i] == 31);
    }
    CHECK(mx == 31);
    CHECK_THROWS_AS(quantize_patch(img, 1), ValidationError);
}

TEST_CASE("glcm: hand-enumerated 2x2 case") {
    // grid [[0,0],[1,1]]: horizontal pairs (0,0) and (1,1)
    auto g = compute_glcm({0, 0, 1, 1}, 2, 2, 2);
    CHECK(g.at(0, 0) == 0.5);
    CHECK(g.at(1, 1) == 0.5);
    CHECK(g.at(0, 1) == 0.0);
    CHECK(g.mu_x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.mu_y == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.sigma_x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(g.sigma_y == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("glcm: constant grid and width errors") {
    auto g = compute_glcm({0, 0, 0, 0}, 2, 2, 4);
    CHECK(g.at(0, 0) == 1.0);
    CHECK_THROWS_AS(compute_glcm({0, 0}, 2, 1, 2), ValidationError);
}

TEST_CASE("glcm matches the naive oracle on 100 random grids") {
    Rng rng(17, "glcm", 0);
    for (int t = 0; t < 100; ++t) {
        auto img = oracle::random_image(rng, 16, 16, 0, 1000);
        auto q = quantize_patch(img, 32);
        auto got = compute_glcm(q, 16, 16, 32);
        auto want = oracle::glcm_horizontal(q, 16, 16, 32);
        double mass = 0;
        for (int i = 0; i < 32; ++i)
            for (int j = 0; j < 32; ++j) {
                CHECK(got.at(i, j) == want.p[std::size_t(i) * 32 + j]);
                mass += got.at(i, j);
            }
        CHECK(std::abs(mass - 1.0) <= 1e-12);
    }
}

TEST_CASE("haralick: hand-evaluated two-diagonal glcm") {
    auto g = compute_glcm({0, 0, 1, 1}, 2, 2, 2);
    auto h = haralick_features(g);
    CHECK(h.angular_second_moment == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.energy == doctest::Approx(std::sqrt(0.5)).epsilon(1e-15));
    CHECK(h.contrast == 0.0);
    CHECK(h.dissimilarity == 0.0);
    CHECK(h.homogeneity == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(h.correlation == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("haralick: constant patch conventions") {
    auto g = compute_glcm({0, 0, 0, 0, 0, 0}, 2, 3, 8);
    auto h = haralick_features(g);
    CHECK(h.angular_second_moment == 1.0);
    CHECK(h.energy == 1.0);
    CHECK(h.contrast == 0.0);
    CHECK(h.homogeneity == 1.0);
    CHECK(h.correlation == 1.0);  // zero-variance convention
}

TEST_CASE("haralick: uniform 2x2-level glcm") {
    // 4 rows x 2 cols, one horizontal pair each: all four cells 0.25
    auto g = compute_glcm({0, 0, 0, 1, 1, 0, 1, 1}, 4, 2, 2);
    REQUIRE(g.at(0, 0) == 0.25);
    REQUIRE(g.at(0, 1) == 0.25);
    REQUIRE(g.at(1, 0) == 0.25);
    REQUIRE(g.at(1, 1) == 0.25);
    auto h = haralick_features(g);
    CHECK(h.contrast == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(h.correlation == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("tamura: constant patch") {
    auto t = tamura_features(image_of(std::vector<double>(256, 3.0), 16, 16));
    CHECK(t.coarseness == 1.0);
    CHECK(t.contrast == 0.0);
    CHECK(t.roughness == 1.0);
}

TEST_CASE("tamura contrast: balanced binary patch") {
    std::vector<double> v(256);
    for (int i = 0; i < 256; ++i) v[i] = i % 2;
    auto t = tamura_features(image_of(std::move(v), 16, 16));
    CHECK(t.contrast == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("tamura coarseness: wider stripes score coarser") {
    auto stripes = [](int period) {
        std::vector<double> v(256);
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) v[std::size_t(r) * 16 + c] = (c / period) % 2;
        return image_of(std::move(v), 16, 16);
    };
    auto t2 = tamura_features(stripes(2));
    auto t8 = tamura_features(stripes(8));
    CHECK(t8.coarseness > t2.coarseness);
    // and the brute-force oracle agrees on both
    CHECK(oracle::rel_err(t2.coarseness, oracle::tamura_coarseness(stripes(2))) < 1e-12);
    CHECK(oracle::rel_err(t8.coarseness, oracle::tamura_coarseness(stripes(8))) < 1e-12);
}

TEST_CASE("distribution stats: worked values") {
    std::vector<double> ten(10);
    for (int i = 0; i < 10; ++i) ten[i] = i + 1;
    auto d = distribution_stats(image_of(std::move(ten), 2, 5));
    CHECK(d.p10 == doctest::Approx(1.9).epsilon(1e-14));

    auto sym = distribution_stats(image_of({1, 2, 3, 2}, 2, 2));
    CHECK(sym.skewness == doctest::Approx(0.0).epsilon(1e-14));

    auto pm = distribution_stats(image_of({-1, 1, -1, 1}, 2, 2));
    CHECK(pm.kurtosis == doctest::Approx(-2.0).epsilon(1e-14));
    CHECK(pm.mean == 0.0);
}

TEST_CASE("feature vector layout and constant-patch finiteness") {
    Rng rng(23, "layout", 0);
    auto t2 = oracle::random_patch(rng, Modality::T2W, Zone::PZ, 1, "s");
    auto adc = oracle::random_patch(rng, Modality::ADC, Zone::PZ, 1, "s");
    auto fv = extract_features(make_paired_sample(t2, adc));
    auto t2f = texture::patch_features(patch_image(t2), kT2QuantLevels);
    auto adcf = texture::patch_features(patch_image(adc), kAdcQuantLevels);
    for (int i = 0; i < 13; ++i) {
        CHECK(fv.values[i] == t2f[i]);
        CHECK(fv.values[13 + i] == adcf[i]);
    }

    Patch ct2 = t2, cadc = adc;
    std::fill(ct2.pixels.begin(), ct2.pixels.end(), 2.0f);
    std::fill(cadc.pixels.begin(), cadc.pixels.end(), 5.0f);
    auto cfv = extract_features(make_paired_sample(ct2, cadc));
    for (double v : cfv.values) CHECK(std::isfinite(v));
}

TEST_CASE("13 features match the naive oracle on 50 random samples per modality") {
    Rng rng(29, "oracle", 0);
    for (int t = 0; t < 50; ++t) {
        auto t2 = oracle::random_patch(rng, Modality::T2W, Zone::TZ, 0, "s");
        auto got = texture::patch_features(patch_image(t2), kT2QuantLevels);
        auto want = oracle::patch_features(patch_image(t2), kT2QuantLevels);
        for (int i = 0; i < 13; ++i) CHECK(oracle::rel_err(got[i], want[i]) < 1e-10);

        auto adc = oracle::random_patch(rng, Modality::ADC, Zone::TZ, 0, "s");
        auto gota = texture::patch_features(patch_image(adc), kAdcQuantLevels);
        auto wanta = oracle::patch_features(patch_image(adc), kAdcQuantLevels);
        for (int i = 0; i < 13; ++i) CHECK(oracle::rel_err(gota[i], wanta[i]) < 1e-10);
    }
}

TEST_CASE("exact identities: energy^2 == asm, roughness == coarseness + contrast") {
    Rng rng(31, "ident", 0);
    for (int t = 0; t < 200; ++t) {
        auto img = oracle::random_image(rng, 16, 16, 0, 4095);
        auto q = quantize_patch(img, 32);
        auto h = haralick_features(compute_glcm(q, 16, 16, 32));
        CHECK(h.energy * h.energy == h.angular_second_moment);
        auto tam = tamura_features(img);
        CHECK(tam.coarseness + tam.contrast == tam.roughness);
    }
}

TEST_CASE("affine intensity transform: moments invariant, p10/mean equivariant") {
    Rng rng(37, "affine", 0);
    for (int t = 0; t < 20; ++t) {
        auto img = oracle::random_image(rng, 16, 16, 100, 900);
        const double a = rng.uniform(0.5, 3.0), b = rng.uniform(-50, 50);
        Image scaled = img;
        for (double& x : scaled.v) x = a * x + b;

        auto d0 = distribution_stats(img);
        auto d1 = distribution_stats(scaled);
        CHECK(std::abs(d1.skewness - d0.skewness) < 1e-9);
        CHECK(std::abs(d1.kurtosis - d0.kurtosis) < 1e-9);
        CHECK(std::abs(d1.p10 - (a * d0.p10 + b)) < 1e-9 * std::max(1.0, std::abs(d0.p10)));
        CHECK(std::abs(d1.mean - (a * d0.mean + b)) < 1e-9 * std::max(1.0, std::abs(d0.mean)));

        // Haralick invariance under constant shift (quantization absorbs it)
        Image shifted = img;
        for (double& x : shifted.v) x += 123.25;
        auto h0 = haralick_features(compute_glcm(quantize_patch(img, 32), 16, 16, 32));
        auto h1 = haralick_features(compute_glcm(quantize_patch(shifted, 32), 16, 16, 32));
        CHECK(h0.contrast == h1.contrast);
        CHECK(h0.energy == h1.energy);
        CHECK(h0.homogeneity == h1.homogeneity);
    }
}

TEST_CASE("batch extraction is worker-count independent") {
    Rng rng(43, "batch", 0);
    ZoneDataset ds;
    ds.zone = Zone::PZ;
    ds.split = Split::Train;
    for (int i = 0; i < 40; ++i) {
        auto id = "s" + std::to_string(i);
        auto t2 = oracle::random_patch(rng, Modality::T2W, Zone::PZ, i % 2, id);
        auto adc = oracle::random_patch(rng, Modality::ADC, Zone::PZ, i % 2, id);
        ds.samples.push_back(make_paired_sample(t2, adc));
    }
    auto one = extract_features_batch(ds, 1);
    auto eight = extract_features_batch(ds, 8);
    REQUIRE(one.size() == eight.size());
    for (std::size_t i = 0; i < one.size(); ++i) {
        CHECK(one[i].sample_id == eight[i].sample_id);
        for (std::size_t j = 0; j < kFeatureCount; ++j)
            CHECK(one[i].values[j] == eight[i].values[j]);
    }
}
