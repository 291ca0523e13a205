#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dfl/market_data.hpp"

namespace dfl {

/// Long-only portfolio weights on the unit simplex (sum 1 within 1e-8, each
/// weight in [0,1] within 1e-10).
struct Portfolio {
    Eigen::VectorXd weights;
};

/// Instance of the mean-variance problem
///   maximize  w'mu - lambda w'Sigma w   s.t.  sum w = 1, 0 <= w <= 1,
/// solved internally in the equivalent minimization form
///   minimize  lambda w'Sigma w - mu'w.
struct MvoProblem {
    Eigen::VectorXd mu;      // expected returns, decimal/day
    CovMatrix cov;
    double risk_aversion;    // lambda > 0
};

/// Converged solve plus the KKT bookkeeping consumed by the solution
/// differentiation. Active sets are classified geometrically (bounds that
/// hold with equality at the optimum) and are disjoint; the stationarity
/// convention is 2*lambda*Sigma*w - mu + nu*1 - pi_lo + pi_up = 0.
struct SolveReport {
    Portfolio portfolio;
    std::vector<int> active_lower;   // weights clamped at 0
    std::vector<int> active_upper;   // weights clamped at 1
    double equality_multiplier = 0;  // nu
    double kkt_residual = 0;
    int iterations = 0;
};

/// Solves the box-and-simplex QP with a primal active-set method started from
/// the equal-weight portfolio. Deterministic: ties in blocking and release
/// steps are broken toward the lowest index.
SolveReport solve_mvo(const MvoProblem& problem);

/// Objective in maximization form: mu'w - lambda w'Sigma w.
double mvo_objective(const Portfolio& w, const Eigen::VectorXd& mu, const CovMatrix& cov,
                     double risk_aversion);

/// Regret of deciding from mu_hat when mu_star realizes (minimization
/// convention): f(w*(mu_hat), mu_star) - f(w*(mu_star), mu_star) with
/// f(w, mu) = lambda w'Sigma w - mu'w. Non-negative up to solver tolerance.
double regret(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
              const CovMatrix& cov, double risk_aversion);

/// Unconstrained Sharpe-maximizing direction Sigma^-1 mu via a Cholesky
/// solve.
Eigen::VectorXd sharpe_max_unconstrained(const Eigen::VectorXd& mu, const CovMatrix& cov);

/// Process-wide count of solve_mvo invocations (instrumentation; used to
/// verify that pure-MSE training never touches the solver).
std::uint64_t qp_solve_count();
void reset_qp_solve_count();

}  // namespace dfl
