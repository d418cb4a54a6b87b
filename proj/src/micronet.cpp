#include "zldc/micronet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"

namespace zldc {
namespace net {

namespace {

void require(bool ok, const char* msg) {
    if (!ok) throw ValidationError(msg);
}

std::size_t sz(int a) { return static_cast<std::size_t>(a); }

}  // namespace

void validate_config(const NetConfig& cfg) {
    require(std::isfinite(cfg.lr) && cfg.lr > 0.0, "learning rate must be positive");
    require(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0, "beta1 must lie in [0,1)");
    require(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0, "beta2 must lie in [0,1)");
    require(cfg.eps > 0.0, "adam epsilon must be positive");
    require(cfg.dropout >= 0.0 && cfg.dropout < 1.0, "dropout probability must lie in [0,1)");
    require(cfg.batch_size >= 1, "batch size must be positive");
    require(cfg.epochs >= 0, "epochs must be non-negative");
}

// ---- layer primitives -------------------------------------------------

void conv3x3_forward(const std::vector<double>& in, int n, int c_in, int h, int w,
                     const std::vector<double>& wgt, const std::vector<double>& bias, int c_out,
                     std::vector<double>& out) {
    require(in.size() == sz(n) * sz(c_in) * sz(h) * sz(w), "conv input shape mismatch");
    require(wgt.size() == sz(c_out) * sz(c_in) * 9, "conv weight shape mismatch");
    require(bias.size() == sz(c_out), "conv bias shape mismatch");
    out.assign(sz(n) * sz(c_out) * sz(h) * sz(w), 0.0);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < c_out; ++o) {
            double* op = &out[((sz(b) * sz(c_out) + sz(o)) * sz(h)) * sz(w)];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    double acc = bias[sz(o)];
                    for (int i = 0; i < c_in; ++i) {
                        const double* ip = &in[((sz(b) * sz(c_in) + sz(i)) * sz(h)) * sz(w)];
                        const double* wp = &wgt[(sz(o) * sz(c_in) + sz(i)) * 9];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int yy = y + ky - 1;
                            if (yy < 0 || yy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int xx = x + kx - 1;
                                if (xx < 0 || xx >= w) continue;
                                acc += wp[ky * 3 + kx] * ip[yy * w + xx];
                            }
                        }
                    }
                    op[y * w + x] = acc;
                }
        }
}

void conv3x3_backward(const std::vector<double>& in, const std::vector<double>& dout, int n,
                      int c_in, int h, int w, const std::vector<double>& wgt, int c_out,
                      std::vector<double>& din, std::vector<double>& dwgt,
                      std::vector<double>& dbias) {
    require(dout.size() == sz(n) * sz(c_out) * sz(h) * sz(w), "conv grad shape mismatch");
    din.assign(in.size(), 0.0);
    dwgt.assign(wgt.size(), 0.0);
    dbias.assign(sz(c_out), 0.0);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < c_out; ++o) {
            const double* gp = &dout[((sz(b) * sz(c_out) + sz(o)) * sz(h)) * sz(w)];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const double g = gp[y * w + x];
                    if (g == 0.0) continue;
                    dbias[sz(o)] += g;
                    for (int i = 0; i < c_in; ++i) {
                        const double* ip = &in[((sz(b) * sz(c_in) + sz(i)) * sz(h)) * sz(w)];
                        double* dip = &din[((sz(b) * sz(c_in) + sz(i)) * sz(h)) * sz(w)];
                        const double* wp = &wgt[(sz(o) * sz(c_in) + sz(i)) * 9];
                        double* dwp = &dwgt[(sz(o) * sz(c_in) + sz(i)) * 9];
                        for (int ky = 0; ky < 3; ++ky) {
                            const int yy = y + ky - 1;
                            if (yy < 0 || yy >= h) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int xx = x + kx - 1;
                                if (xx < 0 || xx >= w) continue;
                                dwp[ky * 3 + kx] += g * ip[yy * w + xx];
                                dip[yy * w + xx] += g * wp[ky * 3 + kx];
                            }
                        }
                    }
                }
        }
}

BnStats bn_batch_stats(const std::vector<double>& x, int n, int c, int hw) {
    require(x.size() == sz(n) * sz(c) * sz(hw), "batchnorm input shape mismatch");
    BnStats s;
    s.mean.assign(sz(c), 0.0);
    s.var.assign(sz(c), 0.0);
    const double m = double(n) * hw;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const double* p = &x[(sz(b) * sz(c) + sz(ch)) * sz(hw)];
            for (int k = 0; k < hw; ++k) s.mean[sz(ch)] += p[k];
        }
    for (double& v : s.mean) v /= m;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const double* p = &x[(sz(b) * sz(c) + sz(ch)) * sz(hw)];
            for (int k = 0; k < hw; ++k) {
                const double d = p[k] - s.mean[sz(ch)];
                s.var[sz(ch)] += d * d;
            }
        }
    for (double& v : s.var) v /= m;
    return s;
}

void bn_forward(const std::vector<double>& x, int n, int c, int hw, const BnStats& stats,
                const std::vector<double>& gamma, const std::vector<double>& beta,
                std::vector<double>& xhat, std::vector<double>& out) {
    require(stats.mean.size() == sz(c) && stats.var.size() == sz(c), "batchnorm stats mismatch");
    require(gamma.size() == sz(c) && beta.size() == sz(c), "batchnorm scale mismatch");
    xhat.resize(x.size());
    out.resize(x.size());
    for (int ch = 0; ch < c; ++ch) {
        const double istd = 1.0 / std::sqrt(stats.var[sz(ch)] + kBnEps);
        const double mu = stats.mean[sz(ch)];
        const double g = gamma[sz(ch)], bt = beta[sz(ch)];
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (sz(b) * sz(c) + sz(ch)) * sz(hw);
            for (int k = 0; k < hw; ++k) {
                const double xh = (x[base + sz(k)] - mu) * istd;
                xhat[base + sz(k)] = xh;
                out[base + sz(k)] = g * xh + bt;
            }
        }
    }
}

void bn_train_backward(const std::vector<double>& xhat, const std::vector<double>& dout, int n,
                       int c, int hw, const std::vector<double>& gamma, const BnStats& stats,
                       std::vector<double>& dx, std::vector<double>& dgamma,
                       std::vector<double>& dbeta) {
    dx.assign(xhat.size(), 0.0);
    dgamma.assign(sz(c), 0.0);
    dbeta.assign(sz(c), 0.0);
    const double m = double(n) * hw;
    for (int ch = 0; ch < c; ++ch) {
        const double istd = 1.0 / std::sqrt(stats.var[sz(ch)] + kBnEps);
        double sum_d = 0.0, sum_dx = 0.0;
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (sz(b) * sz(c) + sz(ch)) * sz(hw);
            for (int k = 0; k < hw; ++k) {
                const double d = dout[base + sz(k)];
                sum_d += d;
                sum_dx += d * xhat[base + sz(k)];
            }
        }
        dgamma[sz(ch)] = sum_dx;
        dbeta[sz(ch)] = sum_d;
        const double g = gamma[sz(ch)];
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (sz(b) * sz(c) + sz(ch)) * sz(hw);
            for (int k = 0; k < hw; ++k) {
                const double d = dout[base + sz(k)];
                dx[base + sz(k)] =
                    g * istd / m * (m * d - sum_d - xhat[base + sz(k)] * sum_dx);
            }
        }
    }
}

void bn_eval_backward(const std::vector<double>& xhat, const std::vector<double>& dout, int n,
                      int c, int hw, const std::vector<double>& gamma, const BnStats& stats,
                      std::vector<double>& dx, std::vector<double>& dgamma,
                      std::vector<double>& dbeta) {
    dx.assign(xhat.size(), 0.0);
    dgamma.assign(sz(c), 0.0);
    dbeta.assign(sz(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        const double gi = gamma[sz(ch)] / std::sqrt(stats.var[sz(ch)] + kBnEps);
        for (int b = 0; b < n; ++b) {
            const std::size_t base = (sz(b) * sz(c) + sz(ch)) * sz(hw);
            for (int k = 0; k < hw; ++k) {
                const double d = dout[base + sz(k)];
                dgamma[sz(ch)] += d * xhat[base + sz(k)];
                dbeta[sz(ch)] += d;
                dx[base + sz(k)] = d * gi;
            }
        }
    }
}

void relu_forward(const std::vector<double>& in, std::vector<double>& out) {
    out.resize(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
}

void relu_backward(const std::vector<double>& pre, const std::vector<double>& dout,
                   std::vector<double>& din) {
    require(pre.size() == dout.size(), "relu grad shape mismatch");
    din.resize(pre.size());
    for (std::size_t i = 0; i < pre.size(); ++i) din[i] = pre[i] > 0.0 ? dout[i] : 0.0;
}

void maxpool2_forward(const std::vector<double>& in, int n, int c, int h, int w,
                      std::vector<double>& out, std::vector<int>& argmax) {
    require(h % 2 == 0 && w % 2 == 0, "pooling needs even spatial dims");
    require(in.size() == sz(n) * sz(c) * sz(h) * sz(w), "pool input shape mismatch");
    const int oh = h / 2, ow = w / 2;
    out.assign(sz(n) * sz(c) * sz(oh) * sz(ow), 0.0);
    argmax.assign(out.size(), 0);
    std::size_t oi = 0;
    for (int b = 0; b < n; ++b)
        for (int ch = 0; ch < c; ++ch) {
            const std::size_t base = (sz(b) * sz(c) + sz(ch)) * sz(h) * sz(w);
            for (int y = 0; y < oh; ++y)
                for (int x = 0; x < ow; ++x, ++oi) {
                    // Strict > keeps the first maximum in scan order on ties.
                    double best = -std::numeric_limits<double>::infinity();
                    std::size_t best_at = base;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::size_t at =
                                base + sz(2 * y + dy) * sz(w) + sz(2 * x + dx);
                            if (in[at] > best) {
                                best = in[at];
                                best_at = at;
                            }
                        }
                    out[oi] = best;
                    argmax[oi] = int(best_at);
                }
        }
}

void maxpool2_backward(const std::vector<int>& argmax, const std::vector<double>& dout,
                       std::size_t in_size, std::vector<double>& din) {
    require(argmax.size() == dout.size(), "pool grad shape mismatch");
    din.assign(in_size, 0.0);
    for (std::size_t i = 0; i < dout.size(); ++i) din[sz(argmax[i])] += dout[i];
}

void fc_forward(const std::vector<double>& x, int n, int in_dim, const std::vector<double>& wgt,
                const std::vector<double>& bias, int out_dim, std::vector<double>& out) {
    require(x.size() == sz(n) * sz(in_dim), "fc input shape mismatch");
    require(wgt.size() == sz(out_dim) * sz(in_dim) && bias.size() == sz(out_dim),
            "fc weight shape mismatch");
    out.assign(sz(n) * sz(out_dim), 0.0);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_dim; ++o) {
            const double* xp = &x[sz(b) * sz(in_dim)];
            const double* wp = &wgt[sz(o) * sz(in_dim)];
            double acc = bias[sz(o)];
            for (int i = 0; i < in_dim; ++i) acc += wp[i] * xp[i];
            out[sz(b) * sz(out_dim) + sz(o)] = acc;
        }
}

void fc_backward(const std::vector<double>& x, const std::vector<double>& dout, int n, int in_dim,
                 int out_dim, const std::vector<double>& wgt, std::vector<double>& dx,
                 std::vector<double>& dwgt, std::vector<double>& dbias) {
    require(dout.size() == sz(n) * sz(out_dim), "fc grad shape mismatch");
    dx.assign(x.size(), 0.0);
    dwgt.assign(wgt.size(), 0.0);
    dbias.assign(sz(out_dim), 0.0);
    for (int b = 0; b < n; ++b)
        for (int o = 0; o < out_dim; ++o) {
            const double g = dout[sz(b) * sz(out_dim) + sz(o)];
            if (g == 0.0) continue;
            dbias[sz(o)] += g;
            const double* xp = &x[sz(b) * sz(in_dim)];
            const double* wp = &wgt[sz(o) * sz(in_dim)];
            double* dxp = &dx[sz(b) * sz(in_dim)];
            double* dwp = &dwgt[sz(o) * sz(in_dim)];
            for (int i = 0; i < in_dim; ++i) {
                dwp[i] += g * xp[i];
                dxp[i] += g * wp[i];
            }
        }
}

void softmax_rows(const std::vector<double>& logits, int n, int k, std::vector<double>& probs) {
    require(logits.size() == sz(n) * sz(k), "softmax shape mismatch");
    probs.resize(logits.size());
    for (int b = 0; b < n; ++b) {
        const double* lp = &logits[sz(b) * sz(k)];
        double* pp = &probs[sz(b) * sz(k)];
        double mx = lp[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, lp[j]);
        double total = 0.0;
        for (int j = 0; j < k; ++j) {
            pp[j] = std::exp(lp[j] - mx);
            total += pp[j];
        }
        for (int j = 0; j < k; ++j) pp[j] /= total;
    }
}

double softmax_ce(const std::vector<double>& logits, const std::vector<int>& labels, int n,
                  std::vector<double>& dlogits) {
    require(labels.size() == sz(n), "label count mismatch");
    for (int y : labels) require(y == 0 || y == 1, "labels must be 0 or 1");
    std::vector<double> probs;
    softmax_rows(logits, n, kNumClasses, probs);
    dlogits.assign(logits.size(), 0.0);
    double loss = 0.0;
    for (int b = 0; b < n; ++b) {
        const std::size_t base = sz(b) * kNumClasses;
        const double py = probs[base + sz(labels[sz(b)])];
        loss -= std::log(std::max(py, 1e-300));
        for (int j = 0; j < kNumClasses; ++j) {
            dlogits[base + sz(j)] =
                (probs[base + sz(j)] - (j == labels[sz(b)] ? 1.0 : 0.0)) / double(n);
        }
    }
    return loss / double(n);
}

// ---- network -----------------------------------------------------------

NetState init_net(const NetConfig& cfg) {
    validate_config(cfg);
    NetState s;
    s.cfg = cfg;
    auto he = [&](std::vector<double>& w, std::size_t count, int fan_in, std::uint64_t k) {
        Rng rng(cfg.seed, "net:init", k);
        const double stdev = std::sqrt(2.0 / double(fan_in));
        w.resize(count);
        for (double& v : w) v = stdev * rng.next_normal();
    };
    he(s.params.conv1_w, sz(kConv1Channels) * 9, 9, 0);
    s.params.conv1_b.assign(sz(kConv1Channels), 0.0);
    s.params.bn1_g.assign(sz(kConv1Channels), 1.0);
    s.params.bn1_b.assign(sz(kConv1Channels), 0.0);
    he(s.params.conv2_w, sz(kConv2Channels) * sz(kConv1Channels) * 9, kConv1Channels * 9, 1);
    s.params.conv2_b.assign(sz(kConv2Channels), 0.0);
    s.params.bn2_g.assign(sz(kConv2Channels), 1.0);
    s.params.bn2_b.assign(sz(kConv2Channels), 0.0);
    he(s.params.fc1_w, sz(kFcDim) * sz(kFlatDim), kFlatDim, 2);
    s.params.fc1_b.assign(sz(kFcDim), 0.0);
    he(s.params.fc2_w, sz(kNumClasses) * sz(kFcDim), kFcDim, 3);
    s.params.fc2_b.assign(sz(kNumClasses), 0.0);

    s.bn1_rmean.assign(sz(kConv1Channels), 0.0);
    s.bn1_rvar.assign(sz(kConv1Channels), 1.0);
    s.bn2_rmean.assign(sz(kConv2Channels), 0.0);
    s.bn2_rvar.assign(sz(kConv2Channels), 1.0);

    auto zero_like = [](const NetParams& p) {
        NetParams z = p;
        for_each_tensor(z, [](const char*, std::vector<double>& t) {
            std::fill(t.begin(), t.end(), 0.0);
        });
        return z;
    };
    s.adam_m = zero_like(s.params);
    s.adam_v = zero_like(s.params);
    return s;
}

std::vector<double> forward(const NetState& state, const std::vector<double>& batch,
                            std::size_t n, Mode mode, Rng* drop, ForwardCache* cache) {
    require(batch.size() == n * 256, "batch must be n x 256 pixels");
    require(n >= 1, "empty batch");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.n = n;

    c.xn.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i)
        c.xn[i] = (batch[i] - state.input_mean) / state.input_std;

    conv3x3_forward(c.xn, int(n), 1, kNetInput, kNetInput, state.params.conv1_w,
                    state.params.conv1_b, kConv1Channels, c.c1);
    if (mode == Mode::Train) {
        c.bn1 = bn_batch_stats(c.c1, int(n), kConv1Channels, kNetInput * kNetInput);
    } else {
        c.bn1 = {state.bn1_rmean, state.bn1_rvar};
    }
    bn_forward(c.c1, int(n), kConv1Channels, kNetInput * kNetInput, c.bn1, state.params.bn1_g,
               state.params.bn1_b, c.bn1_xhat, c.bn1_out);
    relu_forward(c.bn1_out, c.r1);
    maxpool2_forward(c.r1, int(n), kConv1Channels, kNetInput, kNetInput, c.p1, c.p1_arg);

    conv3x3_forward(c.p1, int(n), kConv1Channels, 8, 8, state.params.conv2_w,
                    state.params.conv2_b, kConv2Channels, c.c2);
    if (mode == Mode::Train) {
        c.bn2 = bn_batch_stats(c.c2, int(n), kConv2Channels, 64);
    } else {
        c.bn2 = {state.bn2_rmean, state.bn2_rvar};
    }
    bn_forward(c.c2, int(n), kConv2Channels, 64, c.bn2, state.params.bn2_g, state.params.bn2_b,
               c.bn2_xhat, c.bn2_out);
    relu_forward(c.bn2_out, c.r2);
    maxpool2_forward(c.r2, int(n), kConv2Channels, 8, 8, c.p2, c.p2_arg);

    fc_forward(c.p2, int(n), kFlatDim, state.params.fc1_w, state.params.fc1_b, kFcDim, c.fc1);
    relu_forward(c.fc1, c.r3);

    const double p = state.cfg.dropout;
    if (mode == Mode::Train && p > 0.0) {
        require(drop != nullptr, "train-mode forward needs a dropout stream");
        c.mask.resize(c.r3.size());
        const double keep = 1.0 / (1.0 - p);
        for (double& mv : c.mask) mv = drop->next_double() < p ? 0.0 : keep;
        c.dropped.resize(c.r3.size());
        for (std::size_t i = 0; i < c.r3.size(); ++i) c.dropped[i] = c.r3[i] * c.mask[i];
    } else {
        c.mask.clear();
        c.dropped = c.r3;
    }

    fc_forward(c.dropped, int(n), kFcDim, state.params.fc2_w, state.params.fc2_b, kNumClasses,
               c.logits);
    return c.logits;
}

Gradients backward(const NetState& state, const ForwardCache& c, Mode mode,
                   const std::vector<double>& dlogits) {
    require(dlogits.size() == c.n * kNumClasses, "logit grad shape mismatch");
    const int n = int(c.n);
    Gradients g;

    std::vector<double> d_dropped;
    fc_backward(c.dropped, dlogits, n, kFcDim, kNumClasses, state.params.fc2_w, d_dropped,
                g.params.fc2_w, g.params.fc2_b);
    std::vector<double> d_r3 = d_dropped;
    if (!c.mask.empty())
        for (std::size_t i = 0; i < d_r3.size(); ++i) d_r3[i] *= c.mask[i];
    std::vector<double> d_fc1;
    relu_backward(c.fc1, d_r3, d_fc1);
    std::vector<double> d_p2;
    fc_backward(c.p2, d_fc1, n, kFlatDim, kFcDim, state.params.fc1_w, d_p2, g.params.fc1_w,
                g.params.fc1_b);

    std::vector<double> d_r2;
    maxpool2_backward(c.p2_arg, d_p2, c.r2.size(), d_r2);
    std::vector<double> d_bn2out;
    relu_backward(c.bn2_out, d_r2, d_bn2out);
    std::vector<double> d_c2;
    if (mode == Mode::Train)
        bn_train_backward(c.bn2_xhat, d_bn2out, n, kConv2Channels, 64, state.params.bn2_g, c.bn2,
                          d_c2, g.params.bn2_g, g.params.bn2_b);
    else
        bn_eval_backward(c.bn2_xhat, d_bn2out, n, kConv2Channels, 64, state.params.bn2_g, c.bn2,
                         d_c2, g.params.bn2_g, g.params.bn2_b);
    std::vector<double> d_p1;
    conv3x3_backward(c.p1, d_c2, n, kConv1Channels, 8, 8, state.params.conv2_w, kConv2Channels,
                     d_p1, g.params.conv2_w, g.params.conv2_b);

    std::vector<double> d_r1;
    maxpool2_backward(c.p1_arg, d_p1, c.r1.size(), d_r1);
    std::vector<double> d_bn1out;
    relu_backward(c.bn1_out, d_r1, d_bn1out);
    std::vector<double> d_c1;
    if (mode == Mode::Train)
        bn_train_backward(c.bn1_xhat, d_bn1out, n, kConv1Channels, kNetInput * kNetInput,
                          state.params.bn1_g, c.bn1, d_c1, g.params.bn1_g, g.params.bn1_b);
    else
        bn_eval_backward(c.bn1_xhat, d_bn1out, n, kConv1Channels, kNetInput * kNetInput,
                         state.params.bn1_g, c.bn1, d_c1, g.params.bn1_g, g.params.bn1_b);
    conv3x3_backward(c.xn, d_c1, n, 1, kNetInput, kNetInput, state.params.conv1_w, kConv1Channels,
                     g.dinput, g.params.conv1_w, g.params.conv1_b);
    return g;
}

LossGrads loss_and_grads(const NetState& state, const std::vector<double>& batch, std::size_t n,
                         const std::vector<int>& labels, Rng* drop) {
    LossGrads out;
    forward(state, batch, n, Mode::Train, drop, &out.cache);
    std::vector<double> dlogits;
    out.loss = softmax_ce(out.cache.logits, labels, int(n), dlogits);
    out.grads = backward(state, out.cache, Mode::Train, dlogits);
    return out;
}

void adam_step(NetState& state, const NetParams& grads) {
    state.step += 1;
    const NetConfig& cfg = state.cfg;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));

    std::vector<std::vector<double>*> ps, ms, vs;
    std::vector<const std::vector<double>*> gs;
    for_each_tensor(state.params, [&](const char*, std::vector<double>& t) { ps.push_back(&t); });
    for_each_tensor(state.adam_m, [&](const char*, std::vector<double>& t) { ms.push_back(&t); });
    for_each_tensor(state.adam_v, [&](const char*, std::vector<double>& t) { vs.push_back(&t); });
    for_each_tensor(const_cast<NetParams&>(grads),
                    [&](const char*, std::vector<double>& t) { gs.push_back(&t); });

    for (std::size_t t = 0; t < ps.size(); ++t) {
        auto& p = *ps[t];
        auto& m = *ms[t];
        auto& v = *vs[t];
        const auto& gr = *gs[t];
        require(gr.size() == p.size(), "gradient shape mismatch");
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gr[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gr[i] * gr[i];
            p[i] -= cfg.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg.eps);
        }
    }
}

void update_running(NetState& state, const ForwardCache& cache) {
    auto blend = [](std::vector<double>& run, const std::vector<double>& batch) {
        for (std::size_t i = 0; i < run.size(); ++i)
            run[i] = (1.0 - kBnMomentum) * run[i] + kBnMomentum * batch[i];
    };
    blend(state.bn1_rmean, cache.bn1.mean);
    blend(state.bn1_rvar, cache.bn1.var);
    blend(state.bn2_rmean, cache.bn2.mean);
    blend(state.bn2_rvar, cache.bn2.var);
}

namespace {

std::vector<double> patch_pixels(const Patch& p) {
    require(p.modality == Modality::T2W && p.size == kNetInput,
            "network input must be 16x16 T2W patches");
    std::vector<double> out(p.pixels.size());
    for (std::size_t i = 0; i < p.pixels.size(); ++i) out[i] = double(p.pixels[i]);
    return out;
}

}  // namespace

TrainResult train_net(const NetConfig& cfg, const std::vector<Patch>& patches) {
    validate_config(cfg);
    require(!patches.empty(), "training set is empty");
    bool has_pos = false, has_neg = false;
    for (const auto& p : patches) {
        require(p.modality == Modality::T2W && p.size == kNetInput,
                "network input must be 16x16 T2W patches");
        (p.label == 1 ? has_pos : has_neg) = true;
    }
    require(has_pos && has_neg, "training set needs both classes");

    TrainResult res;
    res.state = init_net(cfg);

    // Input normalization over all training pixels.
    double mean = 0.0, var = 0.0;
    std::size_t count = 0;
    for (const auto& p : patches)
        for (float v : p.pixels) {
            mean += double(v);
            ++count;
        }
    mean /= double(count);
    for (const auto& p : patches)
        for (float v : p.pixels) var += (double(v) - mean) * (double(v) - mean);
    var /= double(count);
    res.state.input_mean = mean;
    res.state.input_std = var > 0.0 ? std::sqrt(var) : 1.0;

    const std::size_t n = patches.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    std::uint64_t gstep = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, "net:epoch", std::uint64_t(epoch));
        shuffle_rng.shuffle(order);
        double epoch_total = 0.0;
        for (std::size_t at = 0; at < n; at += sz(cfg.batch_size)) {
            const std::size_t bs = std::min(sz(cfg.batch_size), n - at);
            std::vector<double> batch(bs * 256);
            std::vector<int> labels(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const Patch& p = patches[order[at + i]];
                for (std::size_t k = 0; k < 256; ++k) batch[i * 256 + k] = double(p.pixels[k]);
                labels[i] = p.label;
            }
            Rng drop(cfg.seed, "net:dropout", gstep++);
            auto lg = loss_and_grads(res.state, batch, bs, labels, &drop);
            if (!std::isfinite(lg.loss))
                throw ComputeError("training diverged at epoch " + std::to_string(epoch));
            adam_step(res.state, lg.grads.params);
            update_running(res.state, lg.cache);
            epoch_total += lg.loss * double(bs);
        }
        res.epoch_loss.push_back(epoch_total / double(n));
    }
    return res;
}

std::vector<double> predict_net(const NetState& state, const std::vector<Patch>& patches) {
    std::vector<double> out;
    out.reserve(patches.size());
    const std::size_t chunk = 256;
    for (std::size_t at = 0; at < patches.size(); at += chunk) {
        const std::size_t bs = std::min(chunk, patches.size() - at);
        std::vector<double> batch(bs * 256);
        for (std::size_t i = 0; i < bs; ++i) {
            const auto px = patch_pixels(patches[at + i]);
            std::copy(px.begin(), px.end(), batch.begin() + long(i * 256));
        }
        std::vector<double> logits = forward(state, batch, bs, Mode::Eval, nullptr, nullptr);
        std::vector<double> probs;
        softmax_rows(logits, int(bs), kNumClasses, probs);
        for (std::size_t i = 0; i < bs; ++i) out.push_back(probs[i * kNumClasses + 1]);
    }
    return out;
}

std::array<double, 256> saliency_map(const NetState& state, const Patch& patch) {
    const auto batch = patch_pixels(patch);
    ForwardCache cache;
    forward(state, batch, 1, Mode::Eval, nullptr, &cache);
    std::vector<double> dlogits = {0.0, 1.0};  // positive-class logit
    Gradients g = backward(state, cache, Mode::Eval, dlogits);
    std::array<double, 256> map{};
    for (std::size_t i = 0; i < 256; ++i)
        map[i] = std::abs(g.dinput[i] / state.input_std);
    return map;
}

// ---- persistence --------------------------------------------------------

std::string net_payload(const NetState& state) {
    nlohmann::json j;
    j["config"] = {{"lr", state.cfg.lr},
                   {"beta1", state.cfg.beta1},
                   {"beta2", state.cfg.beta2},
                   {"eps", state.cfg.eps},
                   {"dropout", state.cfg.dropout},
                   {"batch_size", state.cfg.batch_size},
                   {"epochs", state.cfg.epochs},
                   {"seed", state.cfg.seed}};
    nlohmann::json params;
    for_each_tensor(const_cast<NetParams&>(state.params),
                    [&](const char* name, std::vector<double>& t) { params[name] = t; });
    j["params"] = params;
    nlohmann::json m, v;
    for_each_tensor(const_cast<NetParams&>(state.adam_m),
                    [&](const char* name, std::vector<double>& t) { m[name] = t; });
    for_each_tensor(const_cast<NetParams&>(state.adam_v),
                    [&](const char* name, std::vector<double>& t) { v[name] = t; });
    j["adam_m"] = m;
    j["adam_v"] = v;
    j["bn1_rmean"] = state.bn1_rmean;
    j["bn1_rvar"] = state.bn1_rvar;
    j["bn2_rmean"] = state.bn2_rmean;
    j["bn2_rvar"] = state.bn2_rvar;
    j["step"] = state.step;
    j["input_mean"] = state.input_mean;
    j["input_std"] = state.input_std;
    return j.dump();
}

NetState net_from_payload(const std::string& text) {
    try {
        const auto j = nlohmann::json::parse(text);
        NetConfig cfg;
        const auto& jc = j.at("config");
        cfg.lr = jc.at("lr").get<double>();
        cfg.beta1 = jc.at("beta1").get<double>();
        cfg.beta2 = jc.at("beta2").get<double>();
        cfg.eps = jc.at("eps").get<double>();
        cfg.dropout = jc.at("dropout").get<double>();
        cfg.batch_size = jc.at("batch_size").get<int>();
        cfg.epochs = jc.at("epochs").get<int>();
        cfg.seed = jc.at("seed").get<std::uint64_t>();
        NetState s = init_net(cfg);
        for_each_tensor(s.params, [&](const char* name, std::vector<double>& t) {
            auto loaded = j.at("params").at(name).get<std::vector<double>>();
            if (loaded.size() != t.size()) throw ValidationError("tensor size mismatch");
            t = std::move(loaded);
        });
        for_each_tensor(s.adam_m, [&](const char* name, std::vector<double>& t) {
            auto loaded = j.at("adam_m").at(name).get<std::vector<double>>();
            if (loaded.size() != t.size()) throw ValidationError("tensor size mismatch");
            t = std::move(loaded);
        });
        for_each_tensor(s.adam_v, [&](const char* name, std::vector<double>& t) {
            auto loaded = j.at("adam_v").at(name).get<std::vector<double>>();
            if (loaded.size() != t.size()) throw ValidationError("tensor size mismatch");
            t = std::move(loaded);
        });
        auto load_vec = [&](const char* name, std::vector<double>& t) {
            auto loaded = j.at(name).get<std::vector<double>>();
            if (loaded.size() != t.size()) throw ValidationError("tensor size mismatch");
            t = std::move(loaded);
        };
        load_vec("bn1_rmean", s.bn1_rmean);
        load_vec("bn1_rvar", s.bn1_rvar);
        load_vec("bn2_rmean", s.bn2_rmean);
        load_vec("bn2_rvar", s.bn2_rvar);
        for (double v : s.bn1_rvar) require(v > 0.0, "running variance must be positive");
        for (double v : s.bn2_rvar) require(v > 0.0, "running variance must be positive");
        s.step = j.at("step").get<long>();
        s.input_mean = j.at("input_mean").get<double>();
        s.input_std = j.at("input_std").get<double>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed network payload: ") + e.what());
    }
}

}  // namespace net
}  // namespace zldc
