#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "zldc/evaluation.hpp"
#include "zldc/micronet.hpp"
#include "zldc/rng.hpp"

using namespace zldc;
using namespace zldc::net;

namespace {

constexpr double kH = 1e-5;

// Relative disagreement for gradient checks; absolute below magnitude 1.
double gerr(double analytic, double fd) {
    return std::abs(analytic - fd) / std::max({1.0, std::abs(analytic), std::abs(fd)});
}

std::vector<double> randv(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = scale * rng.next_normal();
    return v;
}

// Central finite difference of f() wrt one slot.
template <typename F>
double fd(F&& f, double& slot) {
    const double keep = slot;
    slot = keep + kH;
    const double up = f();
    slot = keep - kH;
    const double dn = f();
    slot = keep;
    return (up - dn) / (2.0 * kH);
}

Patch make_t2(const std::vector<float>& px, int label, const std::string& id) {
    return make_patch(px, Modality::T2W, Zone::PZ, label, "case_" + id, id);
}

// Class 1 carries a bright central block; class 0 is plain noise.
std::vector<Patch> blob_patches(Rng& rng, int n, double bump, const std::string& tag) {
    std::vector<Patch> out;
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        std::vector<float> px(256);
        for (auto& v : px) v = float(rng.next_normal());
        if (label == 1)
            for (int r = 5; r < 11; ++r)
                for (int c = 5; c < 11; ++c) px[std::size_t(r) * 16 + c] += float(bump);
        out.push_back(make_t2(px, label, tag + std::to_string(i)));
    }
    return out;
}

}  // namespace

TEST_CASE("conv3x3 gradients match finite differences in every coordinate") {
    Rng rng(31, "net:conv", 0);
    const int n = 2, c_in = 2, h = 4, w = 3, c_out = 3;
    auto in = randv(rng, std::size_t(n * c_in * h * w));
    auto wgt = randv(rng, std::size_t(c_out * c_in * 9), 0.5);
    auto bias = randv(rng, std::size_t(c_out), 0.3);
    auto proj = randv(rng, std::size_t(n * c_out * h * w));

    auto value = [&]() {
        std::vector<double> out;
        conv3x3_forward(in, n, c_in, h, w, wgt, bias, c_out, out);
        double L = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) L += proj[i] * out[i];
        return L;
    };
    std::vector<double> out, din, dwgt, dbias;
    conv3x3_forward(in, n, c_in, h, w, wgt, bias, c_out, out);
    conv3x3_backward(in, proj, n, c_in, h, w, wgt, c_out, din, dwgt, dbias);

    for (std::size_t i = 0; i < in.size(); ++i) CHECK(gerr(din[i], fd(value, in[i])) < 1e-6);
    for (std::size_t i = 0; i < wgt.size(); ++i) CHECK(gerr(dwgt[i], fd(value, wgt[i])) < 1e-6);
    for (std::size_t i = 0; i < bias.size(); ++i) CHECK(gerr(dbias[i], fd(value, bias[i])) < 1e-6);
}

TEST_CASE("batchnorm train forward normalizes and backward matches differences") {
    Rng rng(32, "net:bn", 0);
    const int n = 3, c = 2, hw = 4;
    auto x = randv(rng, std::size_t(n * c * hw), 2.0);
    for (auto& v : x) v += 1.5;  // nonzero mean so normalization is visible
    auto gamma = randv(rng, std::size_t(c), 0.5);
    auto beta = randv(rng, std::size_t(c), 0.5);
    auto proj = randv(rng, std::size_t(n * c * hw));

    const auto stats = bn_batch_stats(x, n, c, hw);
    std::vector<double> xhat, out;
    bn_forward(x, n, c, hw, stats, gamma, beta, xhat, out);

    // Pre-scale activations have batch mean 0 and unit variance per channel.
    for (int ch = 0; ch < c; ++ch) {
        double m = 0.0, v = 0.0;
        for (int b = 0; b < n; ++b)
            for (int k = 0; k < hw; ++k) m += xhat[std::size_t((b * c + ch) * hw + k)];
        m /= double(n * hw);
        for (int b = 0; b < n; ++b)
            for (int k = 0; k < hw; ++k) {
                const double d = xhat[std::size_t((b * c + ch) * hw + k)] - m;
                v += d * d;
            }
        v /= double(n * hw);
        CHECK(std::abs(m) <= 1e-6);
        CHECK(std::abs(v - 1.0) <= 1e-5);
    }

    // Train-mode value recomputes batch statistics, so the FD sees the full
    // mean/variance coupling that bn_train_backward differentiates.
    auto value = [&]() {
        const auto s = bn_batch_stats(x, n, c, hw);
        std::vector<double> xh, o;
        bn_forward(x, n, c, hw, s, gamma, beta, xh, o);
        double L = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) L += proj[i] * o[i];
        return L;
    };
    std::vector<double> dx, dgamma, dbeta;
    bn_train_backward(xhat, proj, n, c, hw, gamma, stats, dx, dgamma, dbeta);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(gerr(dx[i], fd(value, x[i])) < 1e-6);
    for (std::size_t i = 0; i < gamma.size(); ++i)
        CHECK(gerr(dgamma[i], fd(value, gamma[i])) < 1e-6);
    for (std::size_t i = 0; i < beta.size(); ++i) CHECK(gerr(dbeta[i], fd(value, beta[i])) < 1e-6);

    // Eval-mode value holds the statistics fixed.
    const BnStats frozen = stats;
    auto eval_value = [&]() {
        std::vector<double> xh, o;
        bn_forward(x, n, c, hw, frozen, gamma, beta, xh, o);
        double L = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) L += proj[i] * o[i];
        return L;
    };
    std::vector<double> ex, eg, eb;
    bn_eval_backward(xhat, proj, n, c, hw, gamma, frozen, ex, eg, eb);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(gerr(ex[i], fd(eval_value, x[i])) < 1e-6);
}

TEST_CASE("maxpool picks the first maximum and routes gradients exactly once") {
    // One batch, one channel, 4x4 with a tie inside the top-left window.
    std::vector<double> in = {
        7.0, 7.0, 1.0, 2.0,  //
        0.0, 3.0, 4.0, 9.0,  //
        5.0, 1.0, 2.0, 2.0,  //
        5.0, 0.0, 2.0, 2.0,  //
    };
    std::vector<double> out;
    std::vector<int> arg;
    maxpool2_forward(in, 1, 1, 4, 4, out, arg);
    REQUIRE(out.size() == 4);
    CHECK(out[0] == 7.0);
    CHECK(arg[0] == 0);  // tie between offsets 0 and 1 goes to scan-first
    CHECK(out[1] == 9.0);
    CHECK(out[2] == 5.0);
    CHECK(arg[2] == 8);  // tie between rows routes to the earlier row
    CHECK(out[3] == 2.0);
    CHECK(arg[3] == 10);

    std::vector<double> dout = {1.0, 2.0, 3.0, 4.0}, din;
    maxpool2_backward(arg, dout, in.size(), din);
    // Each window's routed mass lands on exactly one input position.
    for (int wy = 0; wy < 2; ++wy)
        for (int wx = 0; wx < 2; ++wx) {
            double total = 0.0;
            int hits = 0;
            for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) {
                    const double v = din[std::size_t((2 * wy + dy) * 4 + 2 * wx + dx)];
                    if (v != 0.0) ++hits;
                    total += v;
                }
            CHECK(hits == 1);
            CHECK(total == dout[std::size_t(wy * 2 + wx)]);
        }
}

TEST_CASE("fc and relu gradients match finite differences") {
    Rng rng(33, "net:fc", 0);
    const int n = 2, in_dim = 5, out_dim = 3;
    auto x = randv(rng, std::size_t(n * in_dim));
    auto wgt = randv(rng, std::size_t(out_dim * in_dim), 0.6);
    auto bias = randv(rng, std::size_t(out_dim), 0.2);
    auto proj = randv(rng, std::size_t(n * out_dim));

    auto value = [&]() {
        std::vector<double> out;
        fc_forward(x, n, in_dim, wgt, bias, out_dim, out);
        double L = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) L += proj[i] * out[i];
        return L;
    };
    std::vector<double> dx, dwgt, dbias;
    fc_backward(x, proj, n, in_dim, out_dim, wgt, dx, dwgt, dbias);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(gerr(dx[i], fd(value, x[i])) < 1e-6);
    for (std::size_t i = 0; i < wgt.size(); ++i) CHECK(gerr(dwgt[i], fd(value, wgt[i])) < 1e-6);
    for (std::size_t i = 0; i < bias.size(); ++i) CHECK(gerr(dbias[i], fd(value, bias[i])) < 1e-6);

    // ReLU away from the kink.
    std::vector<double> pre = {1.3, -0.7, 2.1, -0.2, 0.4};
    auto rproj = randv(rng, pre.size());
    auto rvalue = [&]() {
        std::vector<double> o;
        relu_forward(pre, o);
        double L = 0.0;
        for (std::size_t i = 0; i < o.size(); ++i) L += rproj[i] * o[i];
        return L;
    };
    std::vector<double> dpre;
    relu_backward(pre, rproj, dpre);
    for (std::size_t i = 0; i < pre.size(); ++i) CHECK(gerr(dpre[i], fd(rvalue, pre[i])) < 1e-6);
}

TEST_CASE("softmax rows sum to one and cross-entropy behaves") {
    Rng rng(34, "net:sm", 0);
    auto logits = randv(rng, 12, 3.0);
    std::vector<double> probs;
    softmax_rows(logits, 6, 2, probs);
    for (int b = 0; b < 6; ++b) {
        const double s = probs[std::size_t(b * 2)] + probs[std::size_t(b * 2 + 1)];
        CHECK(std::abs(s - 1.0) <= 1e-12);
        CHECK(probs[std::size_t(b * 2)] >= 0.0);
    }

    // Uniform logits: two-class entropy.
    std::vector<double> flat = {0.4, 0.4, -1.0, -1.0};
    std::vector<int> labels = {0, 1};
    std::vector<double> dl;
    CHECK(std::abs(softmax_ce(flat, labels, 2, dl) - std::log(2.0)) <= 1e-12);

    // Saturated correct logits.
    std::vector<double> sure = {40.0, 0.0, 0.0, 40.0};
    CHECK(softmax_ce(sure, labels, 2, dl) < 1e-6);

    // Gradient vs finite differences.
    auto l2 = randv(rng, 8, 2.0);
    std::vector<int> y = {1, 0, 0, 1};
    std::vector<double> grad;
    const double base = softmax_ce(l2, y, 4, grad);
    CHECK(std::isfinite(base));
    auto value = [&]() {
        std::vector<double> tmp;
        return softmax_ce(l2, y, 4, tmp);
    };
    for (std::size_t i = 0; i < l2.size(); ++i) CHECK(gerr(grad[i], fd(value, l2[i])) < 1e-6);

    std::vector<int> bad = {2, 0, 0, 1};
    std::vector<double> tmp;
    CHECK_THROWS_AS(softmax_ce(l2, bad, 4, tmp), ValidationError);
}

TEST_CASE("adam steps follow the bias-corrected formula") {
    NetConfig cfg;
    cfg.seed = 9;
    NetState s = init_net(cfg);

    // Zero gradients leave parameters untouched.
    NetParams zero = s.params;
    for_each_tensor(zero, [](const char*, std::vector<double>& t) {
        std::fill(t.begin(), t.end(), 0.0);
    });
    const NetParams before = s.params;
    adam_step(s, zero);
    CHECK(s.step == 1);
    CHECK(s.params.conv1_w == before.conv1_w);
    CHECK(s.params.fc2_b == before.fc2_b);

    // First step from zero moments: delta = -lr * g / (|g| + eps).
    NetState s2 = init_net(cfg);
    NetParams g = zero;
    g.fc2_b[0] = 0.25;
    g.fc2_b[1] = -3.0;
    adam_step(s2, g);
    CHECK(s2.params.fc2_b[0] ==
          doctest::Approx(-cfg.lr * 0.25 / (0.25 + cfg.eps)).epsilon(1e-12));
    CHECK(s2.params.fc2_b[1] == doctest::Approx(cfg.lr * 3.0 / (3.0 + cfg.eps)).epsilon(1e-12));

    // Constant gradient: step size converges to lr.
    NetState s3 = init_net(cfg);
    double prev = s3.params.fc2_b[0];
    double delta = 0.0;
    for (int i = 0; i < 300; ++i) {
        adam_step(s3, g);
        delta = prev - s3.params.fc2_b[0];
        prev = s3.params.fc2_b[0];
    }
    CHECK(delta == doctest::Approx(cfg.lr).epsilon(0.02));
}

TEST_CASE("forward pass shapes, zero-weight logits, and eval purity") {
    NetConfig cfg;
    cfg.seed = 5;
    cfg.dropout = 0.0;
    NetState s = init_net(cfg);
    Rng rng(35, "net:fw", 0);
    auto batch = randv(rng, 3 * 256);

    const auto logits = forward(s, batch, 3, Mode::Eval, nullptr, nullptr);
    REQUIRE(logits.size() == 6);
    const auto logits2 = forward(s, batch, 3, Mode::Eval, nullptr, nullptr);
    CHECK(logits == logits2);

    for_each_tensor(s.params, [](const char*, std::vector<double>& t) {
        std::fill(t.begin(), t.end(), 0.0);
    });
    const auto zl = forward(s, batch, 3, Mode::Eval, nullptr, nullptr);
    std::vector<double> probs;
    softmax_rows(zl, 3, 2, probs);
    for (double v : zl) CHECK(v == 0.0);
    for (double v : probs) CHECK(v == 0.5);

    CHECK_THROWS_AS(forward(s, batch, 2, Mode::Eval, nullptr, nullptr), ValidationError);
}

TEST_CASE("end-to-end gradients match finite differences for every tensor") {
    NetConfig cfg;
    cfg.seed = 17;
    cfg.dropout = 0.0;  // differentiate a deterministic function
    NetState s = init_net(cfg);
    Rng rng(36, "net:e2e", 0);
    auto batch = randv(rng, 3 * 256);
    std::vector<int> labels = {1, 0, 1};

    const auto lg = loss_and_grads(s, batch, 3, labels, nullptr);
    CHECK(std::isfinite(lg.loss));

    auto value = [&]() {
        ForwardCache cache;
        forward(s, batch, 3, Mode::Train, nullptr, &cache);
        std::vector<double> dl;
        return softmax_ce(cache.logits, labels, 3, dl);
    };

    std::vector<std::vector<double>*> tensors;
    std::vector<const std::vector<double>*> grads;
    for_each_tensor(s.params, [&](const char*, std::vector<double>& t) { tensors.push_back(&t); });
    for_each_tensor(const_cast<NetParams&>(lg.grads.params),
                    [&](const char*, std::vector<double>& t) { grads.push_back(&t); });

    double worst = 0.0;
    for (std::size_t t = 0; t < tensors.size(); ++t) {
        auto& param = *tensors[t];
        const auto& grad = *grads[t];
        REQUIRE(grad.size() == param.size());
        // Every coordinate of the small tensors; a deterministic stride
        // sample (>= 37 coordinates) of the large ones.
        const std::size_t stride = std::max<std::size_t>(1, param.size() / 37);
        for (std::size_t i = 0; i < param.size(); i += stride)
            worst = std::max(worst, gerr(grad[i], fd(value, param[i])));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("saliency equals the class-1 weight row for a pure linear map") {
    Rng rng(37, "net:lin", 0);
    const int in_dim = 6, out_dim = 2;
    auto x = randv(rng, std::size_t(in_dim));
    auto wgt = randv(rng, std::size_t(out_dim * in_dim));
    auto bias = randv(rng, std::size_t(out_dim));

    std::vector<double> dlogit = {0.0, 1.0};
    std::vector<double> dx, dw, db;
    fc_backward(x, dlogit, 1, in_dim, out_dim, wgt, dx, dw, db);
    for (int i = 0; i < in_dim; ++i)
        CHECK(std::abs(dx[std::size_t(i)]) == std::abs(wgt[std::size_t(in_dim + i)]));
}

TEST_CASE("saliency maps match per-pixel finite differences") {
    Rng rng(38, "net:sal", 0);
    auto patches = blob_patches(rng, 12, 2.5, "sal");
    NetConfig cfg;
    cfg.seed = 23;
    cfg.epochs = 3;
    cfg.dropout = 0.0;
    auto trained = train_net(cfg, patches);
    NetState& s = trained.state;

    Patch probe = patches[1];
    const auto map = saliency_map(s, probe);
    for (double v : map) CHECK(v >= 0.0);

    auto logit1 = [&](const Patch& p) {
        std::vector<double> batch(256);
        for (std::size_t i = 0; i < 256; ++i) batch[i] = double(p.pixels[i]);
        return forward(s, batch, 1, Mode::Eval, nullptr, nullptr)[1];
    };
    double worst = 0.0;
    for (std::size_t i = 0; i < 256; ++i) {
        Patch up = probe, dn = probe;
        up.pixels[i] += float(kH * 10);  // float32 pixels need a larger h
        dn.pixels[i] -= float(kH * 10);
        const double hh = double(up.pixels[i]) - double(dn.pixels[i]);
        const double fdg = (logit1(up) - logit1(dn)) / hh;
        worst = std::max(worst, gerr(map[i], std::abs(fdg)));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("training memorizes a toy set and repeats bit-identically") {
    Rng rng(39, "net:toy", 0);
    auto toy = blob_patches(rng, 8, 3.0, "toy");

    NetConfig cfg;
    cfg.seed = 3;
    cfg.epochs = 500;  // batch of 8 -> one step per epoch
    cfg.dropout = 0.0;
    auto run = train_net(cfg, toy);
    REQUIRE(run.epoch_loss.size() == 500);
    CHECK(run.epoch_loss.back() < 0.01);

    NetConfig small = cfg;
    small.epochs = 25;
    auto a = train_net(small, toy);
    auto b = train_net(small, toy);
    CHECK(a.epoch_loss == b.epoch_loss);
    CHECK(net_payload(a.state) == net_payload(b.state));
}

TEST_CASE("training separates held-out blob patches") {
    Rng rng(40, "net:auc", 0);
    auto train = blob_patches(rng, 100, 2.0, "tr");
    auto test = blob_patches(rng, 60, 2.0, "te");

    NetConfig cfg;
    cfg.seed = 11;
    cfg.epochs = 8;
    cfg.dropout = 0.5;
    auto run = train_net(cfg, train);

    eval::LabeledScores ls;
    ls.scores = predict_net(run.state, test);
    for (const auto& p : test) ls.labels.push_back(p.label);
    CHECK(eval::roc_auc(ls).auc > 0.95);
}

TEST_CASE("training validates inputs and reports divergence") {
    Rng rng(41, "net:val", 0);
    NetConfig cfg;
    cfg.epochs = 3;

    CHECK_THROWS_AS(train_net(cfg, {}), ValidationError);

    auto onesided = blob_patches(rng, 6, 2.0, "one");
    for (auto& p : onesided) p.label = 1;
    CHECK_THROWS_AS(train_net(cfg, onesided), ValidationError);

    NetConfig bad = cfg;
    bad.dropout = 1.0;
    CHECK_THROWS_AS(train_net(bad, blob_patches(rng, 6, 2.0, "bd")), ValidationError);

    // An absurd learning rate overflows the activations into NaN.
    NetConfig hot = cfg;
    hot.lr = 1e300;
    hot.dropout = 0.0;
    hot.epochs = 5;
    auto data = blob_patches(rng, 8, 2.0, "hot");
    CHECK_THROWS_WITH_AS(train_net(hot, data), doctest::Contains("diverged"), ComputeError);
}

TEST_CASE("network payload round trips bit exactly") {
    Rng rng(42, "net:pl", 0);
    auto data = blob_patches(rng, 16, 2.0, "pl");
    NetConfig cfg;
    cfg.seed = 2;
    cfg.epochs = 2;
    auto run = train_net(cfg, data);

    const std::string payload = net_payload(run.state);
    NetState back = net_from_payload(payload);
    CHECK(net_payload(back) == payload);

    const auto p0 = predict_net(run.state, data);
    const auto p1 = predict_net(back, data);
    for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p0[i] == p1[i]);

    CHECK_THROWS_AS(net_from_payload("nonsense"), ValidationError);
    CHECK_THROWS_AS(net_from_payload("{\"config\":{}}"), ValidationError);
}
