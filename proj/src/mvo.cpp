#include "dfl/mvo.hpp"

#include <atomic>
#include <cmath>
#include <limits>

#include "dfl/errors.hpp"

namespace dfl {

namespace {

std::atomic<std::uint64_t> g_solve_count{0};

constexpr double kFeasTol = 1e-10;   // constraint feasibility
constexpr double kStepTol = 1e-12;   // candidate acceptance width
constexpr double kMultTol = 1e-11;   // working-set release threshold

enum class BoundSide : std::uint8_t { none, lower, upper };

struct Workspace {
    std::vector<BoundSide> side;   // working-set membership per index
    std::vector<int> free_idx;

    void rebuild_free(int n) {
        free_idx.clear();
        for (int i = 0; i < n; ++i)
            if (side[i] == BoundSide::none) free_idx.push_back(i);
    }
};

// Equality-constrained subproblem on the free variables given the working
// set: minimize lambda w_F' S_FF w_F + 2 lambda w_F' S_FU 1 - mu_F' w_F
// subject to 1'w_F = 1 - |U|. Returns the candidate free block and nu.
void solve_subproblem(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mu, double lambda,
                      const Workspace& ws, Eigen::VectorXd& cand, double& nu) {
    const auto& F = ws.free_idx;
    const int nf = static_cast<int>(F.size());
    const int n = static_cast<int>(mu.size());

    double budget = 1.0;
    for (int i = 0; i < n; ++i)
        if (ws.side[i] == BoundSide::upper) budget -= 1.0;

    Eigen::MatrixXd sigma_ff(nf, nf);
    Eigen::VectorXd rhs(nf);
    for (int a = 0; a < nf; ++a) {
        double upper_load = 0.0;
        for (int i = 0; i < n; ++i)
            if (ws.side[i] == BoundSide::upper) upper_load += sigma(F[a], i);
        rhs(a) = mu(F[a]) - 2.0 * lambda * upper_load;
        for (int b = 0; b < nf; ++b) sigma_ff(a, b) = sigma(F[a], F[b]);
    }

    Eigen::LLT<Eigen::MatrixXd> llt(sigma_ff);
    if (llt.info() != Eigen::Success)
        throw NumericalFailureError("Cholesky breakdown on the free block");

    const Eigen::VectorXd x = llt.solve(rhs) / (2.0 * lambda);
    const Eigen::VectorXd y = llt.solve(Eigen::VectorXd::Ones(nf)) / (2.0 * lambda);
    const double denom = y.sum();
    if (!(denom > 0.0))
        throw NumericalFailureError("degenerate equality multiplier system");
    nu = (x.sum() - budget) / denom;
    cand = x - nu * y;
}

}  // namespace

SolveReport solve_mvo(const MvoProblem& problem) {
    g_solve_count.fetch_add(1, std::memory_order_relaxed);

    const Eigen::VectorXd& mu = problem.mu;
    const Eigen::MatrixXd& sigma = problem.cov.matrix;
    const double lambda = problem.risk_aversion;
    const int n = static_cast<int>(mu.size());

    if (sigma.rows() != n || sigma.cols() != n)
        throw DimensionMismatchError("mu/cov dimensions disagree");
    if (!(lambda > 0)) throw Error("risk_aversion must be positive");
    if (n < 2) throw DimensionMismatchError("need at least 2 assets");

    Eigen::VectorXd w = Eigen::VectorXd::Constant(n, 1.0 / n);
    Workspace ws;
    ws.side.assign(n, BoundSide::none);
    ws.rebuild_free(n);

    const int max_iter = 50 * n;
    int iter = 0;
    double nu = 0.0;
    bool converged = false;

    while (iter < max_iter) {
        ++iter;
        Eigen::VectorXd cand;
        solve_subproblem(sigma, mu, lambda, ws, cand, nu);

        const auto& F = ws.free_idx;
        bool feasible = true;
        for (int a = 0; a < static_cast<int>(F.size()); ++a) {
            if (cand(a) < -kStepTol || cand(a) > 1.0 + kStepTol) {
                feasible = false;
                break;
            }
        }

        if (feasible) {
            for (int a = 0; a < static_cast<int>(F.size()); ++a) w(F[a]) = cand(a);

            // Release the most negative working-set multiplier, lowest index
            // on ties; if none, we are optimal.
            const Eigen::VectorXd grad = 2.0 * lambda * (sigma * w) - mu;
            int release = -1;
            double worst = -kMultTol;
            for (int i = 0; i < n; ++i) {
                double pi;
                if (ws.side[i] == BoundSide::lower)
                    pi = grad(i) + nu;
                else if (ws.side[i] == BoundSide::upper)
                    pi = -(grad(i) + nu);
                else
                    continue;
                if (pi < worst) {
                    worst = pi;
                    release = i;
                }
            }
            if (release < 0) {
                converged = true;
                break;
            }
            ws.side[release] = BoundSide::none;
            ws.rebuild_free(n);
            continue;
        }

        // Partial step toward the candidate up to the first blocking bound.
        double alpha = 1.0;
        int block = -1;
        BoundSide block_side = BoundSide::none;
        for (int a = 0; a < static_cast<int>(F.size()); ++a) {
            const int i = F[a];
            const double d = cand(a) - w(i);
            if (d < 0.0) {
                const double step = w(i) / (-d);
                if (step < alpha) {
                    alpha = step;
                    block = i;
                    block_side = BoundSide::lower;
                }
            } else if (d > 0.0) {
                const double step = (1.0 - w(i)) / d;
                if (step < alpha) {
                    alpha = step;
                    block = i;
                    block_side = BoundSide::upper;
                }
            }
        }
        if (block < 0)
            throw NumericalFailureError("infeasible candidate without a blocking bound");
        alpha = std::max(alpha, 0.0);
        for (int a = 0; a < static_cast<int>(F.size()); ++a)
            w(F[a]) += alpha * (cand(a) - w(F[a]));
        w(block) = block_side == BoundSide::lower ? 0.0 : 1.0;
        ws.side[block] = block_side;
        ws.rebuild_free(n);
    }

    if (!converged)
        throw NonConvergenceError("active-set iteration cap (" + std::to_string(max_iter) +
                                  ") reached");

    // Geometric classification: bounds holding with equality at the optimum,
    // regardless of which working set produced them.
    SolveReport report;
    report.iterations = iter;
    std::vector<int> free_geo;
    for (int i = 0; i < n; ++i) {
        if (w(i) <= kFeasTol * 10)
            report.active_lower.push_back(i);
        else if (w(i) >= 1.0 - kFeasTol * 10)
            report.active_upper.push_back(i);
        else
            free_geo.push_back(i);
    }

    const Eigen::VectorXd grad = 2.0 * lambda * (sigma * w) - mu;
    double nu_rep;
    if (!free_geo.empty()) {
        double acc = 0.0;
        for (int i : free_geo) acc += -grad(i);
        nu_rep = acc / static_cast<double>(free_geo.size());
    } else {
        // Vertex: nu only constrained to an interval; the midpoint keeps both
        // multiplier families maximally positive.
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (int i : report.active_lower) lo = std::max(lo, -grad(i));
        for (int i : report.active_upper) hi = std::min(hi, -grad(i));
        nu_rep = (lo + hi) / 2.0;
    }

    double residual = std::abs(w.sum() - 1.0);
    for (int i = 0; i < n; ++i)
        residual = std::max({residual, -w(i), w(i) - 1.0});
    for (int i : free_geo) residual = std::max(residual, std::abs(grad(i) + nu_rep));
    for (int i : report.active_lower) residual = std::max(residual, -(grad(i) + nu_rep));
    for (int i : report.active_upper) residual = std::max(residual, grad(i) + nu_rep);

    report.portfolio.weights = std::move(w);
    report.equality_multiplier = nu_rep;
    report.kkt_residual = std::max(residual, 0.0);
    return report;
}

double mvo_objective(const Portfolio& w, const Eigen::VectorXd& mu, const CovMatrix& cov,
                     double risk_aversion) {
    if (w.weights.size() != mu.size() || cov.matrix.rows() != mu.size())
        throw DimensionMismatchError("portfolio/mu/cov dimensions disagree");
    return mu.dot(w.weights) - risk_aversion * w.weights.dot(cov.matrix * w.weights);
}

double regret(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
              const CovMatrix& cov, double risk_aversion) {
    if (mu_hat.size() != mu_star.size())
        throw DimensionMismatchError("mu_hat/mu_star dimensions disagree");
    const SolveReport from_hat = solve_mvo({mu_hat, cov, risk_aversion});
    const SolveReport from_star = solve_mvo({mu_star, cov, risk_aversion});
    const double f_hat = -mvo_objective(from_hat.portfolio, mu_star, cov, risk_aversion);
    const double f_star = -mvo_objective(from_star.portfolio, mu_star, cov, risk_aversion);
    return f_hat - f_star;
}

Eigen::VectorXd sharpe_max_unconstrained(const Eigen::VectorXd& mu, const CovMatrix& cov) {
    if (cov.matrix.rows() != mu.size())
        throw DimensionMismatchError("mu/cov dimensions disagree");
    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("covariance is not positive definite");
    return llt.solve(mu);
}

std::uint64_t qp_solve_count() { return g_solve_count.load(std::memory_order_relaxed); }

void reset_qp_solve_count() { g_solve_count.store(0, std::memory_order_relaxed); }

}  // namespace dfl
