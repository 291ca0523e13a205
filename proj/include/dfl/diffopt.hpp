#pragma once

#include <Eigen/Dense>

#include "dfl/mvo.hpp"

namespace dfl {

/// Jacobian J of the QP solution map, J(i,j) = d w*_i / d mu_hat_j, obtained
/// by differentiating the reduced KKT system at the converged active set.
/// Columns sum to zero (the budget constraint) and rows of strictly bound-
/// active weights are zero.
struct SolutionJacobian {
    Eigen::MatrixXd matrix;          // N x N
    std::vector<int> active_lower;   // snapshot of the sets actually used
    std::vector<int> active_upper;
    bool degenerate_active_set = false;  // a weakly-active bound was released
};

/// Differentiates the solution at the report's active set. Weakly-active
/// bounds (multiplier at zero on the boundary) make the true Jacobian
/// one-sided; they are treated as inactive, and the event is flagged so
/// training can count it.
SolutionJacobian solution_jacobian(const SolveReport& report, const MvoProblem& problem);

/// Central-difference oracle: column j = [w*(mu+h e_j) - w*(mu-h e_j)]/(2h).
Eigen::MatrixXd finite_diff_jacobian(const Eigen::VectorXd& mu_hat, const CovMatrix& cov,
                                     double risk_aversion, double step = 1e-6);

/// Chain-rule gradient of the regret with respect to the prediction:
/// J' (2 lambda Sigma w*(mu_hat) - mu_star).
Eigen::VectorXd regret_gradient(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                                const CovMatrix& cov, double risk_aversion,
                                bool* degenerate = nullptr);

}  // namespace dfl
