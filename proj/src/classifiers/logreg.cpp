#include <cmath>

#include "zldc/classifiers.hpp"

namespace zldc {
namespace cls {
namespace {

double soft_threshold(double v, double a) {
    if (v > a) return v - a;
    if (v < -a) return v + a;
    return 0.0;
}

}  // namespace

// Coordinate descent on mean logistic loss + lambda * |w|_1 over z-scored
// features. Each coordinate minimizes the quadratic majorizer built from the
// curvature bound sigma'(z) <= 1/4, which guarantees monotone descent, and
// the soft-threshold step keeps exact zeros. The sweep stops once the
// largest subgradient optimality violation is at most tol.
TrainedModel train_logreg_l1(const TrainMatrix& data, double lambda, double tol, int max_iter) {
    validate_matrix(data, true);
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw ValidationError("lambda must be non-negative");
    if (!(tol > 0.0)) throw ValidationError("tol must be positive");
    if (max_iter < 1) throw ValidationError("max_iter must be positive");

    const std::size_t n = data.x.size();
    const Scaler scaler = fit_scaler(data.x);
    std::vector<Row> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = apply_scaler(scaler, data.x[i]);

    // Majorizer curvature per coordinate: (1/4) * mean of the column squares.
    std::array<double, kFeatureCount> curv{};
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < kFeatureCount; ++j)
            curv[std::size_t(j)] += z[i][std::size_t(j)] * z[i][std::size_t(j)];
    for (double& c : curv) c = 0.25 * c / double(n);

    std::vector<double> w(kFeatureCount, 0.0);
    double b = 0.0;
    std::vector<double> margin(n, 0.0);

    for (int sweep = 0; sweep < max_iter; ++sweep) {
        double violation = 0.0;

        for (int j = 0; j < kFeatureCount; ++j) {
            if (curv[std::size_t(j)] == 0.0) continue;  // constant column, z-scores to 0
            double g = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                g += (sigmoid(margin[i]) - double(data.y[i])) * z[i][std::size_t(j)];
            g /= double(n);

            const double wj = w[std::size_t(j)];
            const double viol = wj != 0.0 ? std::abs(g + lambda * (wj > 0.0 ? 1.0 : -1.0))
                                          : std::max(std::abs(g) - lambda, 0.0);
            violation = std::max(violation, viol);

            const double h = curv[std::size_t(j)];
            const double wj_new = soft_threshold(wj * h - g, lambda) / h;
            if (wj_new != wj) {
                const double d = wj_new - wj;
                for (std::size_t i = 0; i < n; ++i) margin[i] += d * z[i][std::size_t(j)];
                w[std::size_t(j)] = wj_new;
            }
        }

        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) gb += sigmoid(margin[i]) - double(data.y[i]);
        gb /= double(n);
        violation = std::max(violation, std::abs(gb));
        const double db = -gb / 0.25;
        if (db != 0.0) {
            b += db;
            for (double& m : margin) m += db;
        }

        if (violation <= tol) break;
    }

    for (double m : margin)
        if (!std::isfinite(m)) throw ComputeError("logistic training overflowed");

    TrainedModel model;
    model.kind = ModelKind::LogregL1;
    model.zone = data.zone;
    model.hyperparams = {{"lambda", lambda}, {"tol", tol}, {"max_iter", double(max_iter)}};
    model.scaler = scaler;
    model.logreg.w = w;
    model.logreg.b = b;
    model.importances.resize(kFeatureCount);
    for (int j = 0; j < kFeatureCount; ++j)
        model.importances[std::size_t(j)] = std::abs(w[std::size_t(j)]);
    return model;
}

}  // namespace cls
}  // namespace zldc
