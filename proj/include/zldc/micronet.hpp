#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "zldc/core.hpp"
#include "zldc/rng.hpp"

namespace zldc {
namespace net {

// Small convolutional net over 1x16x16 patches:
//   conv 3x3x16 (pad 1) -> batchnorm -> relu -> maxpool 2x2
//   conv 3x3x32 (pad 1) -> batchnorm -> relu -> maxpool 2x2
//   flatten 512 -> fc 128 -> relu -> dropout -> fc 2 -> softmax
// All passes are written against flat row-major buffers so each layer can be
// finite-difference checked in isolation.

struct NetConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double dropout = 0.5;  // in [0,1)
    int batch_size = 32;
    int epochs = 20;
    std::uint64_t seed = 0;
};

void validate_config(const NetConfig& cfg);

constexpr int kNetInput = 16;            // input side length
constexpr int kConv1Channels = 16;
constexpr int kConv2Channels = 32;
constexpr int kFlatDim = kConv2Channels * 4 * 4;  // 512 after two pools
constexpr int kFcDim = 128;
constexpr int kNumClasses = 2;

// ---- layer primitives -------------------------------------------------
// Shapes are passed explicitly; `n` is the batch size. Convolutions are
// fixed at 3x3, stride 1, zero padding 1, so spatial dims are preserved.

void conv3x3_forward(const std::vector<double>& in, int n, int c_in, int h, int w,
                     const std::vector<double>& wgt, const std::vector<double>& bias, int c_out,
                     std::vector<double>& out);
void conv3x3_backward(const std::vector<double>& in, const std::vector<double>& dout, int n,
                      int c_in, int h, int w, const std::vector<double>& wgt, int c_out,
                      std::vector<double>& din, std::vector<double>& dwgt,
                      std::vector<double>& dbias);

// Batch statistics per channel over (n, h*w); population variance.
struct BnStats {
    std::vector<double> mean;
    std::vector<double> var;
};
// Variance epsilon small enough that normalized activations keep unit
// variance to ~1e-5 even for low-variance channels.
constexpr double kBnEps = 1e-8;
constexpr double kBnMomentum = 0.1;

BnStats bn_batch_stats(const std::vector<double>& x, int n, int c, int hw);
// xhat is the normalized activation before scale/shift; out = gamma*xhat+beta.
void bn_forward(const std::vector<double>& x, int n, int c, int hw, const BnStats& stats,
                const std::vector<double>& gamma, const std::vector<double>& beta,
                std::vector<double>& xhat, std::vector<double>& out);
// Train-mode backward: stats were computed from this batch, so dx carries the
// mean/variance coupling terms.
void bn_train_backward(const std::vector<double>& xhat, const std::vector<double>& dout, int n,
                       int c, int hw, const std::vector<double>& gamma, const BnStats& stats,
                       std::vector<double>& dx, std::vector<double>& dgamma,
                       std::vector<double>& dbeta);
// Eval-mode backward: stats are constants, dx = dout * gamma / sqrt(var+eps).
void bn_eval_backward(const std::vector<double>& xhat, const std::vector<double>& dout, int n,
                      int c, int hw, const std::vector<double>& gamma, const BnStats& stats,
                      std::vector<double>& dx, std::vector<double>& dgamma,
                      std::vector<double>& dbeta);

void relu_forward(const std::vector<double>& in, std::vector<double>& out);
void relu_backward(const std::vector<double>& pre, const std::vector<double>& dout,
                   std::vector<double>& din);

// 2x2 max pooling, stride 2. Ties route to the first index in row-major scan
// order; argmax records the chosen flat input offset for exact backward routing.
void maxpool2_forward(const std::vector<double>& in, int n, int c, int h, int w,
                      std::vector<double>& out, std::vector<int>& argmax);
void maxpool2_backward(const std::vector<int>& argmax, const std::vector<double>& dout,
                       std::size_t in_size, std::vector<double>& din);

void fc_forward(const std::vector<double>& x, int n, int in_dim, const std::vector<double>& wgt,
                const std::vector<double>& bias, int out_dim, std::vector<double>& out);
void fc_backward(const std::vector<double>& x, const std::vector<double>& dout, int n, int in_dim,
                 int out_dim, const std::vector<double>& wgt, std::vector<double>& dx,
                 std::vector<double>& dwgt, std::vector<double>& dbias);

// Row-wise softmax with max-shift; rows sum to 1 within 1e-12.
void softmax_rows(const std::vector<double>& logits, int n, int k, std::vector<double>& probs);
// Mean cross-entropy over the batch and its gradient wrt logits.
double softmax_ce(const std::vector<double>& logits, const std::vector<int>& labels, int n,
                  std::vector<double>& dlogits);

// ---- network state -----------------------------------------------------

struct NetParams {
    std::vector<double> conv1_w, conv1_b;
    std::vector<double> bn1_g, bn1_b;
    std::vector<double> conv2_w, conv2_b;
    std::vector<double> bn2_g, bn2_b;
    std::vector<double> fc1_w, fc1_b;
    std::vector<double> fc2_w, fc2_b;
};

// Applies fn(name, vector&) to each parameter tensor in canonical order.
template <typename P, typename F>
void for_each_tensor(P& params, F&& fn) {
    fn("conv1_w", params.conv1_w);
    fn("conv1_b", params.conv1_b);
    fn("bn1_g", params.bn1_g);
    fn("bn1_b", params.bn1_b);
    fn("conv2_w", params.conv2_w);
    fn("conv2_b", params.conv2_b);
    fn("bn2_g", params.bn2_g);
    fn("bn2_b", params.bn2_b);
    fn("fc1_w", params.fc1_w);
    fn("fc1_b", params.fc1_b);
    fn("fc2_w", params.fc2_w);
    fn("fc2_b", params.fc2_b);
}

enum class Mode { Train, Eval };

struct NetState {
    NetConfig cfg;
    NetParams params;
    // Batchnorm running statistics (eval-mode normalization).
    std::vector<double> bn1_rmean, bn1_rvar;
    std::vector<double> bn2_rmean, bn2_rvar;
    // Adam accumulators, shaped like params.
    NetParams adam_m, adam_v;
    long step = 0;
    // Input normalization fitted on the training set.
    double input_mean = 0.0;
    double input_std = 1.0;
};

// He-normal weights from Rng(seed, "net:init", tensor index); zero biases,
// unit bn scale, zero bn shift, unit running variance.
NetState init_net(const NetConfig& cfg);

struct ForwardCache {
    std::size_t n = 0;
    std::vector<double> xn;  // normalized input
    BnStats bn1, bn2;        // stats used by this pass (batch or running)
    std::vector<double> c1, bn1_xhat, bn1_out, r1;
    std::vector<int> p1_arg;
    std::vector<double> p1;
    std::vector<double> c2, bn2_xhat, bn2_out, r2;
    std::vector<int> p2_arg;
    std::vector<double> p2;
    std::vector<double> fc1, r3, mask, dropped;
    std::vector<double> logits;
};

// Raw pixel batch is n*256 row-major. Train mode uses batch statistics and
// inverted dropout drawn from `drop` (may be null when dropout is 0); eval
// mode uses running stats and no dropout.
std::vector<double> forward(const NetState& state, const std::vector<double>& batch,
                            std::size_t n, Mode mode, Rng* drop, ForwardCache* cache);

struct Gradients {
    NetParams params;
    std::vector<double> dinput;  // wrt normalized input, n*256
};

// Backpropagates dlogits through the cached pass. `mode` selects the
// batchnorm backward variant and must match the forward that built `cache`.
Gradients backward(const NetState& state, const ForwardCache& cache, Mode mode,
                   const std::vector<double>& dlogits);

struct LossGrads {
    double loss = 0.0;
    Gradients grads;
    ForwardCache cache;
};

// Train-mode forward + mean cross-entropy + full backward.
LossGrads loss_and_grads(const NetState& state, const std::vector<double>& batch, std::size_t n,
                         const std::vector<int>& labels, Rng* drop);

// Bias-corrected Adam update; increments state.step.
void adam_step(NetState& state, const NetParams& grads);

// Blends cached batch statistics into the running estimates.
void update_running(NetState& state, const ForwardCache& cache);

struct TrainResult {
    NetState state;
    std::vector<double> epoch_loss;
};

// Trains on 16x16 T2W patches. Deterministic given cfg.seed; throws
// ComputeError("training diverged at epoch N") on non-finite loss.
TrainResult train_net(const NetConfig& cfg, const std::vector<Patch>& patches);

// Positive-class probability per patch, eval mode.
std::vector<double> predict_net(const NetState& state, const std::vector<Patch>& patches);

// |d logit(class 1) / d pixel| in eval mode, 16x16 row-major.
std::array<double, 256> saliency_map(const NetState& state, const Patch& patch);

// JSON payload; doubles round-trip bit exactly.
std::string net_payload(const NetState& state);
NetState net_from_payload(const std::string& text);

}  // namespace net
}  // namespace zldc
