#include "dfl/diffopt.hpp"

#include <algorithm>
#include <cmath>

#include "dfl/errors.hpp"

namespace dfl {

SolutionJacobian solution_jacobian(const SolveReport& report, const MvoProblem& problem) {
    const int n = static_cast<int>(problem.mu.size());
    const Eigen::VectorXd& w = report.portfolio.weights;
    if (w.size() != n) throw DimensionMismatchError("report/problem dimensions disagree");
    const double lambda = problem.risk_aversion;
    const Eigen::MatrixXd& sigma = problem.cov.matrix;

    const Eigen::VectorXd grad = 2.0 * lambda * (sigma * w) - problem.mu;
    const double nu = report.equality_multiplier;
    const double weak_tol = 1e-9 * std::max(1.0, grad.cwiseAbs().maxCoeff());

    SolutionJacobian jac;
    jac.matrix = Eigen::MatrixXd::Zero(n, n);

    // Weakly-active bounds (multiplier at zero) are released into the free
    // set: the solution map is kinked there and this picks the flat side's
    // one-sided derivative deterministically.
    std::vector<bool> is_active(n, false);
    for (int i : report.active_lower) {
        const double pi = grad(i) + nu;
        if (pi < weak_tol)
            jac.degenerate_active_set = true;
        else {
            is_active[i] = true;
            jac.active_lower.push_back(i);
        }
    }
    for (int i : report.active_upper) {
        const double pi = -(grad(i) + nu);
        if (pi < weak_tol)
            jac.degenerate_active_set = true;
        else {
            is_active[i] = true;
            jac.active_upper.push_back(i);
        }
    }

    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i)
        if (!is_active[i]) free_idx.push_back(i);
    const int nf = static_cast<int>(free_idx.size());
    if (nf == 0) return jac;  // vertex: solution locally constant

    Eigen::MatrixXd sigma_ff(nf, nf);
    for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) sigma_ff(a, b) = sigma(free_idx[a], free_idx[b]);

    Eigen::LLT<Eigen::MatrixXd> llt(sigma_ff);
    if (llt.info() != Eigen::Success)
        throw NumericalFailureError("Cholesky breakdown on the reduced KKT system");
    const Eigen::MatrixXd inv_ff = llt.solve(Eigen::MatrixXd::Identity(nf, nf));
    const Eigen::VectorXd inv_ones = inv_ff.rowwise().sum();
    const double ones_inv_ones = inv_ones.sum();
    const Eigen::MatrixXd j_ff =
        (inv_ff - inv_ones * inv_ones.transpose() / ones_inv_ones) / (2.0 * lambda);

    for (int a = 0; a < nf; ++a)
        for (int b = 0; b < nf; ++b) jac.matrix(free_idx[a], free_idx[b]) = j_ff(a, b);
    return jac;
}

Eigen::MatrixXd finite_diff_jacobian(const Eigen::VectorXd& mu_hat, const CovMatrix& cov,
                                     double risk_aversion, double step) {
    if (!(step > 0)) throw Error("finite-difference step must be positive");
    const int n = static_cast<int>(mu_hat.size());
    Eigen::MatrixXd jac(n, n);
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd plus = mu_hat, minus = mu_hat;
        plus(j) += step;
        minus(j) -= step;
        const Eigen::VectorXd w_plus = solve_mvo({plus, cov, risk_aversion}).portfolio.weights;
        const Eigen::VectorXd w_minus =
            solve_mvo({minus, cov, risk_aversion}).portfolio.weights;
        jac.col(j) = (w_plus - w_minus) / (2.0 * step);
    }
    return jac;
}

Eigen::VectorXd regret_gradient(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                                const CovMatrix& cov, double risk_aversion, bool* degenerate) {
    if (mu_hat.size() != mu_star.size())
        throw DimensionMismatchError("mu_hat/mu_star dimensions disagree");
    const MvoProblem problem{mu_hat, cov, risk_aversion};
    const SolveReport report = solve_mvo(problem);
    const SolutionJacobian jac = solution_jacobian(report, problem);
    if (degenerate) *degenerate = jac.degenerate_active_set;
    const Eigen::VectorXd loss_grad =
        2.0 * risk_aversion * (cov.matrix * report.portfolio.weights) - mu_star;
    return jac.matrix.transpose() * loss_grad;
}

}  // namespace dfl
