#pragma once

// Test-only verification oracles, independent of the library's solve paths:
// the QP oracle is an exhaustive simplex grid search evaluating the
// objective straight from its definition.

#include <Eigen/Dense>
#include <cmath>

#include "dfl/market_data.hpp"
#include "dfl/rng.hpp"

namespace oracle {

/// Maximization objective mu'w - lambda w'Sigma w written out longhand.
inline double objective(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                        const Eigen::MatrixXd& sigma, double lambda) {
    const int n = static_cast<int>(w.size());
    double quad = 0.0, lin = 0.0;
    for (int i = 0; i < n; ++i) {
        lin += mu(i) * w(i);
        for (int j = 0; j < n; ++j) quad += w(i) * sigma(i, j) * w(j);
    }
    return lin - lambda * quad;
}

struct GridBest {
    double objective = 0;
    Eigen::VectorXd weights;
};

/// Exhaustive search over the simplex at the given step for N in {2, 3}.
inline GridBest grid_search_mvo(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                                double lambda, double step) {
    const int n = static_cast<int>(mu.size());
    const int m = static_cast<int>(std::llround(1.0 / step));
    GridBest best;
    best.objective = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd w(n);
    if (n == 2) {
        for (int i = 0; i <= m; ++i) {
            w(0) = static_cast<double>(i) / m;
            w(1) = 1.0 - w(0);
            const double f = objective(w, mu, sigma, lambda);
            if (f > best.objective) {
                best.objective = f;
                best.weights = w;
            }
        }
    } else if (n == 3) {
        for (int i = 0; i <= m; ++i) {
            for (int j = 0; j <= m - i; ++j) {
                w(0) = static_cast<double>(i) / m;
                w(1) = static_cast<double>(j) / m;
                w(2) = 1.0 - w(0) - w(1);
                const double f = objective(w, mu, sigma, lambda);
                if (f > best.objective) {
                    best.objective = f;
                    best.weights = w;
                }
            }
        }
    } else {
        throw std::logic_error("grid oracle only supports N in {2, 3}");
    }
    return best;
}

/// Well-conditioned random covariance at daily-return scale: random
/// correlation from a shifted Wishart, volatilities uniform in [lo, hi].
inline dfl::CovMatrix random_covariance(dfl::Rng& rng, int n, double vol_lo = 0.005,
                                        double vol_hi = 0.03) {
    Eigen::MatrixXd g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::MatrixXd a = g * g.transpose() + n * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd scale = a.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd corr = scale.asDiagonal() * a * scale.asDiagonal();
    Eigen::VectorXd vols(n);
    for (int i = 0; i < n; ++i) vols(i) = rng.uniform(vol_lo, vol_hi);
    Eigen::MatrixXd cov = vols.asDiagonal() * corr * vols.asDiagonal();
    cov = ((cov + cov.transpose()) / 2.0).eval();
    return dfl::CovMatrix{cov, 0.0};
}

/// Random weights on the simplex with every entry at least min_weight.
inline Eigen::VectorXd random_interior_weights(dfl::Rng& rng, int n,
                                               double min_weight = 0.03) {
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) g(i) = rng.uniform(0.2, 1.0);
    g /= g.sum();
    return Eigen::VectorXd::Constant(n, min_weight) + (1.0 - n * min_weight) * g;
}

/// Instance whose QP optimum is exactly the given interior weight vector:
/// stationarity pins mu = 2 lambda Sigma w + shift * 1.
inline Eigen::VectorXd mu_for_interior_optimum(const Eigen::VectorXd& w,
                                               const Eigen::MatrixXd& sigma, double lambda,
                                               double shift = 0.0) {
    return 2.0 * lambda * (sigma * w) + Eigen::VectorXd::Constant(w.size(), shift);
}

}  // namespace oracle
