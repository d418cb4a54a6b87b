#include <algorithm>
#include <cmath>
#include <vector>

#include "zldc/classifiers.hpp"

namespace zldc {
namespace cls {
namespace {

double rbf(const Row& a, const Row& b, double gamma) {
    double d2 = 0.0;
    for (int j = 0; j < kFeatureCount; ++j) {
        const double d = a[std::size_t(j)] - b[std::size_t(j)];
        d2 += d * d;
    }
    return std::exp(-gamma * d2);
}

// Sigmoid calibration on decision values (Platt's method with the usual
// regularized targets and a damped Newton fit).
void fit_platt(const std::vector<double>& f, const std::vector<int>& y, double& A, double& B) {
    const std::size_t n = f.size();
    double prior1 = 0.0, prior0 = 0.0;
    for (int yi : y) (yi == 1 ? prior1 : prior0) += 1.0;
    const double hi = (prior1 + 1.0) / (prior1 + 2.0);
    const double lo = 1.0 / (prior0 + 2.0);

    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = y[i] == 1 ? hi : lo;

    auto objective = [&](double a, double b) {
        double F = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = a * f[i] + b;
            if (m >= 0.0)
                F += t[i] * m + std::log1p(std::exp(-m));
            else
                F += (t[i] - 1.0) * m + std::log1p(std::exp(m));
        }
        return F;
    };

    A = 0.0;
    B = std::log((prior0 + 1.0) / (prior1 + 1.0));
    double F = objective(A, B);
    const double sigma = 1e-12;

    for (int it = 0; it < 100; ++it) {
        double h11 = sigma, h22 = sigma, h21 = 0.0, g1 = 0.0, g2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double m = A * f[i] + B;
            double p, q;
            if (m >= 0.0) {
                const double e = std::exp(-m);
                p = e / (1.0 + e);
                q = 1.0 / (1.0 + e);
            } else {
                const double e = std::exp(m);
                p = 1.0 / (1.0 + e);
                q = e / (1.0 + e);
            }
            const double d2 = p * q;
            h11 += f[i] * f[i] * d2;
            h22 += d2;
            h21 += f[i] * d2;
            const double d1 = t[i] - p;
            g1 += f[i] * d1;
            g2 += d1;
        }
        if (std::abs(g1) < 1e-10 && std::abs(g2) < 1e-10) break;

        const double det = h11 * h22 - h21 * h21;
        const double dA = -(h22 * g1 - h21 * g2) / det;
        const double dB = -(-h21 * g1 + h11 * g2) / det;
        const double gd = g1 * dA + g2 * dB;

        double step = 1.0;
        while (step >= 1e-10) {
            const double A2 = A + step * dA;
            const double B2 = B + step * dB;
            const double F2 = objective(A2, B2);
            if (F2 < F + 1e-4 * step * gd) {
                A = A2;
                B = B2;
                F = F2;
                break;
            }
            step *= 0.5;
        }
        if (step < 1e-10) break;  // no descent left at this scale
    }
}

}  // namespace

TrainedModel train_svm_rbf(const TrainMatrix& data, double C, double gamma, double tol) {
    validate_matrix(data, true);
    if (!(C > 0.0) || !std::isfinite(C)) throw ValidationError("C must be positive");
    if (!(tol > 0.0)) throw ValidationError("tol must be positive");

    const std::size_t n = data.x.size();
    const Scaler scaler = fit_scaler(data.x);
    std::vector<Row> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = apply_scaler(scaler, data.x[i]);

    if (gamma <= 0.0) {
        // Variance heuristic over all matrix entries.
        double mean = 0.0, var = 0.0;
        const double cnt = double(n) * kFeatureCount;
        for (const auto& row : z)
            for (double v : row) mean += v;
        mean /= cnt;
        for (const auto& row : z)
            for (double v : row) var += (v - mean) * (v - mean);
        var /= cnt;
        if (var <= 0.0) var = 1.0;
        gamma = 1.0 / (double(kFeatureCount) * var);
    }

    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) ys[i] = data.y[i] == 1 ? 1.0 : -1.0;

    std::vector<std::vector<double>> K(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i; j < n; ++j) K[i][j] = K[j][i] = rbf(z[i], z[j], gamma);

    std::vector<double> alpha(n, 0.0);
    std::vector<double> E(n);
    for (std::size_t i = 0; i < n; ++i) E[i] = -ys[i];  // f = 0 at the start
    double b = 0.0;

    auto take_step = [&](std::size_t i, std::size_t j) -> bool {
        if (i == j) return false;
        const double ai = alpha[i], aj = alpha[j];
        const double yi = ys[i], yj = ys[j];
        double L, H;
        if (yi != yj) {
            L = std::max(0.0, aj - ai);
            H = std::min(C, C + aj - ai);
        } else {
            L = std::max(0.0, ai + aj - C);
            H = std::min(C, ai + aj);
        }
        if (L >= H) return false;
        const double eta = 2.0 * K[i][j] - K[i][i] - K[j][j];
        if (eta >= 0.0) return false;  // duplicate rows; the pair carries no curvature
        double aj_new = aj - yj * (E[i] - E[j]) / eta;
        aj_new = std::clamp(aj_new, L, H);
        if (std::abs(aj_new - aj) < 1e-10) return false;
        const double ai_new = ai + yi * yj * (aj - aj_new);

        const double b1 =
            b - E[i] - yi * (ai_new - ai) * K[i][i] - yj * (aj_new - aj) * K[i][j];
        const double b2 =
            b - E[j] - yi * (ai_new - ai) * K[i][j] - yj * (aj_new - aj) * K[j][j];
        double b_new;
        if (ai_new > 0.0 && ai_new < C)
            b_new = b1;
        else if (aj_new > 0.0 && aj_new < C)
            b_new = b2;
        else
            b_new = 0.5 * (b1 + b2);

        const double di = yi * (ai_new - ai), dj = yj * (aj_new - aj), db = b_new - b;
        for (std::size_t k = 0; k < n; ++k) E[k] += di * K[i][k] + dj * K[j][k] + db;
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        b = b_new;
        return true;
    };

    const int kStallPasses = 10;
    int calm = 0;
    long sweeps = 0;
    while (calm < kStallPasses) {
        if (++sweeps > 20000) throw ComputeError("svm solver did not converge");
        int changed = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = E[i] * ys[i];
            const bool violates = (r < -tol && alpha[i] < C) || (r > tol && alpha[i] > 0.0);
            if (!violates) continue;

            // Second-choice heuristic: largest |E_i - E_j| first, then scan.
            std::size_t best = i;
            double spread = -1.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                const double s = std::abs(E[i] - E[j]);
                if (s > spread) {
                    spread = s;
                    best = j;
                }
            }
            bool ok = best != i && take_step(i, best);
            for (std::size_t j = 0; !ok && j < n; ++j)
                if (j != i && j != best) ok = take_step(i, j);
            if (ok) ++changed;
        }
        calm = changed == 0 ? calm + 1 : 0;
    }

    TrainedModel model;
    model.kind = ModelKind::SvmRbf;
    model.zone = data.zone;
    model.hyperparams = {{"C", C}, {"gamma", gamma}, {"tol", tol}};
    model.scaler = scaler;
    model.svm.gamma = gamma;
    model.svm.bias = b;
    for (std::size_t i = 0; i < n; ++i)
        if (alpha[i] > 0.0) {
            model.svm.support.push_back(z[i]);
            model.svm.coef.push_back(alpha[i] * ys[i]);
        }

    // Decision values on the training set drive the probability calibration.
    std::vector<double> f(n);
    for (std::size_t i = 0; i < n; ++i) f[i] = E[i] + ys[i];
    fit_platt(f, data.y, model.svm.platt_a, model.svm.platt_b);
    return model;
}

double svm_decision(const TrainedModel& m, const Row& r) {
    if (m.kind != ModelKind::SvmRbf) throw ValidationError("not an svm model");
    const Row z = apply_scaler(m.scaler, r);
    double f = m.svm.bias;
    for (std::size_t i = 0; i < m.svm.support.size(); ++i)
        f += m.svm.coef[i] * rbf(m.svm.support[i], z, m.svm.gamma);
    return f;
}

}  // namespace cls
}  // namespace zldc
