#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include "dfl/errors.hpp"
#include "dfl/mvo.hpp"
#include "dfl/rng.hpp"
#include "support/oracles.hpp"

using namespace dfl;

namespace {

CovMatrix identity_cov(int n) {
    return CovMatrix{Eigen::MatrixXd::Identity(n, n), 0.0};
}

Eigen::VectorXd vec2(double a, double b) {
    Eigen::VectorXd v(2);
    v << a, b;
    return v;
}

bool contains(const std::vector<int>& v, int x) {
    return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TEST_CASE("symmetric instance splits equally") {
    const SolveReport r = solve_mvo({vec2(0.0, 0.0), identity_cov(2), 1.0});
    CHECK(r.portfolio.weights(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.portfolio.weights(1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.kkt_residual <= 1e-8);
}

TEST_CASE("interior tilt toward the higher mean") {
    const SolveReport r = solve_mvo({vec2(0.1, 0.0), identity_cov(2), 1.0});
    CHECK(r.portfolio.weights(0) == doctest::Approx(0.525).epsilon(1e-10));
    CHECK(r.portfolio.weights(1) == doctest::Approx(0.475).epsilon(1e-10));
    CHECK(r.active_lower.empty());
    CHECK(r.active_upper.empty());

    const auto gb = oracle::grid_search_mvo(vec2(0.1, 0.0), identity_cov(2).matrix, 1.0, 1e-4);
    CHECK(mvo_objective(r.portfolio, vec2(0.1, 0.0), identity_cov(2), 1.0) >=
          gb.objective - 1e-9);
}

TEST_CASE("extreme mean drives the solution to a vertex") {
    const SolveReport r = solve_mvo({vec2(10.0, 0.0), identity_cov(2), 1.0});
    CHECK(r.portfolio.weights(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.portfolio.weights(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(contains(r.active_upper, 0));
    CHECK(contains(r.active_lower, 1));
    CHECK(r.kkt_residual <= 1e-8);

    const auto gb = oracle::grid_search_mvo(vec2(10.0, 0.0), identity_cov(2).matrix, 1.0, 1e-3);
    CHECK(mvo_objective(r.portfolio, vec2(10.0, 0.0), identity_cov(2), 1.0) >=
          gb.objective - 1e-9);
}

TEST_CASE("objective values") {
    Portfolio equal{vec2(0.5, 0.5)};
    CHECK(mvo_objective(equal, vec2(0.0, 0.0), identity_cov(2), 1.0) ==
          doctest::Approx(-0.5).epsilon(1e-15));
    Portfolio corner{vec2(1.0, 0.0)};
    CHECK(mvo_objective(corner, vec2(0.1, 0.0), identity_cov(2), 1.0) ==
          doctest::Approx(-0.9).epsilon(1e-15));
    CHECK_THROWS_AS(mvo_objective(equal, Eigen::VectorXd::Zero(3), identity_cov(3), 1.0),
                    DimensionMismatchError);
}

TEST_CASE("solver beats random feasible points") {
    Rng rng(31);
    const CovMatrix cov = oracle::random_covariance(rng, 4);
    Eigen::VectorXd mu(4);
    for (int i = 0; i < 4; ++i) mu(i) = rng.normal(0.0, 0.01);
    const SolveReport r = solve_mvo({mu, cov, 3.0});
    const double best = mvo_objective(r.portfolio, mu, cov, 3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        Eigen::VectorXd g(4);
        for (int i = 0; i < 4; ++i) g(i) = rng.uniform(0.0, 1.0);
        g /= g.sum();
        CHECK(best >= oracle::objective(g, mu, cov.matrix, 3.0) - 1e-10);
    }
}

TEST_CASE("regret basics") {
    const CovMatrix cov = identity_cov(2);
    CHECK(regret(vec2(0.1, 0.0), vec2(0.1, 0.0), cov, 1.0) <= 1e-10);
    // swapped prediction: w*(mu_hat)=(0.475,0.525), w*(mu_star)=(0.525,0.475)
    CHECK(regret(vec2(0.0, 0.1), vec2(0.1, 0.0), cov, 1.0) ==
          doctest::Approx(0.005).epsilon(1e-10));
}

TEST_CASE("regret is non-negative on random instances") {
    Rng rng(7);
    for (int trial = 0; trial < 300; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(6));
        const CovMatrix cov = oracle::random_covariance(rng, n);
        Eigen::VectorXd mu_hat(n), mu_star(n);
        for (int i = 0; i < n; ++i) {
            mu_hat(i) = rng.normal(0.0, 0.01);
            mu_star(i) = rng.normal(0.0, 0.01);
        }
        const double lambda = std::vector<double>{1, 3, 5, 10}[rng.uniform_index(4)];
        CHECK(regret(mu_hat, mu_star, cov, lambda) >= -1e-8);
    }
}

TEST_CASE("oracle equivalence on small instances") {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const int n = trial % 2 == 0 ? 2 : 3;
        const CovMatrix cov = oracle::random_covariance(rng, n);
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i) mu(i) = rng.normal(0.0, 0.01);
        const double lambda = std::vector<double>{1, 3, 5, 10}[rng.uniform_index(4)];
        const SolveReport r = solve_mvo({mu, cov, lambda});
        const auto gb = oracle::grid_search_mvo(mu, cov.matrix, lambda, 1e-3);
        const double solver_obj = mvo_objective(r.portfolio, mu, cov, lambda);
        CHECK(solver_obj >= gb.objective - 1e-6);   // never worse than the grid
        CHECK(gb.objective >= solver_obj - 1e-6);   // grid resolution bounds the gap
    }
}

TEST_CASE("feasibility invariants on random instances") {
    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(9));
        const CovMatrix cov = oracle::random_covariance(rng, n);
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i) mu(i) = rng.normal(0.0, 0.02);
        const double lambda = rng.uniform(0.5, 10.0);
        const SolveReport r = solve_mvo({mu, cov, lambda});
        const Eigen::VectorXd& w = r.portfolio.weights;
        CHECK(std::abs(w.sum() - 1.0) <= 1e-8);
        CHECK(w.minCoeff() >= -1e-10);
        CHECK(w.maxCoeff() <= 1.0 + 1e-10);
        CHECK(r.kkt_residual <= 1e-8);
        // active sets disjoint
        for (int i : r.active_lower) CHECK(!contains(r.active_upper, i));
    }
}

TEST_CASE("KKT certificate reconstructs from the report") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_index(9));
        const CovMatrix cov = oracle::random_covariance(rng, n);
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i) mu(i) = rng.normal(0.0, 0.01);
        const double lambda = rng.uniform(1.0, 10.0);
        const SolveReport r = solve_mvo({mu, cov, lambda});

        const Eigen::VectorXd g =
            2.0 * lambda * (cov.matrix * r.portfolio.weights) - mu;
        Eigen::VectorXd pi_lo = Eigen::VectorXd::Zero(n), pi_up = Eigen::VectorXd::Zero(n);
        for (int i : r.active_lower) pi_lo(i) = g(i) + r.equality_multiplier;
        for (int i : r.active_upper) pi_up(i) = -(g(i) + r.equality_multiplier);
        CHECK(pi_lo.minCoeff() >= -1e-8);
        CHECK(pi_up.minCoeff() >= -1e-8);
        const Eigen::VectorXd stat = g +
                                     Eigen::VectorXd::Constant(n, r.equality_multiplier) -
                                     pi_lo + pi_up;
        CHECK(stat.cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("objective scale invariance") {
    Rng rng(19);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 3 + static_cast<int>(rng.uniform_index(5));
        const CovMatrix cov = oracle::random_covariance(rng, n);
        Eigen::VectorXd mu(n);
        for (int i = 0; i < n; ++i) mu(i) = rng.normal(0.0, 0.01);
        const double lambda = rng.uniform(1.0, 5.0);
        const double c = rng.uniform(0.5, 4.0);
        const Eigen::VectorXd w1 = solve_mvo({mu, cov, lambda}).portfolio.weights;
        const Eigen::VectorXd w2 = solve_mvo({c * mu, cov, c * lambda}).portfolio.weights;
        CHECK((w1 - w2).cwiseAbs().maxCoeff() <= 1e-8);
    }
}

TEST_CASE("risk aversion flattens the portfolio") {
    Eigen::VectorXd mu(4);
    mu << 0.03, 0.01, -0.01, 0.0;
    const CovMatrix cov = identity_cov(4);
    double prev = 2.0;
    for (double lambda : {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0}) {
        const Eigen::VectorXd w = solve_mvo({mu, cov, lambda}).portfolio.weights;
        CHECK(w(0) <= prev + 1e-12);
        prev = w(0);
    }
}

TEST_CASE("deterministic resolution") {
    Rng rng(23);
    const CovMatrix cov = oracle::random_covariance(rng, 6);
    Eigen::VectorXd mu(6);
    for (int i = 0; i < 6; ++i) mu(i) = rng.normal(0.0, 0.01);
    const SolveReport a = solve_mvo({mu, cov, 3.0});
    const SolveReport b = solve_mvo({mu, cov, 3.0});
    CHECK(a.portfolio.weights == b.portfolio.weights);
    CHECK(a.active_lower == b.active_lower);
    CHECK(a.active_upper == b.active_upper);
}

TEST_CASE("duplicate assets resolve deterministically with ridge") {
    Rng rng(29);
    Eigen::MatrixXd sigma0 = oracle::random_covariance(rng, 3).matrix;
    Eigen::MatrixXd sigma(4, 4);
    sigma.topLeftCorner(3, 3) = sigma0;
    sigma.row(3) << sigma0(0, 0), sigma0(0, 1), sigma0(0, 2), sigma0(0, 0);
    sigma.col(3) = sigma.row(3).transpose();
    sigma.diagonal().array() += 1e-8;
    Eigen::VectorXd mu(4);
    mu << 0.01, 0.002, -0.003, 0.01;  // asset 3 duplicates asset 0
    const SolveReport a = solve_mvo({mu, CovMatrix{sigma, 1e-8}, 3.0});
    const SolveReport b = solve_mvo({mu, CovMatrix{sigma, 1e-8}, 3.0});
    CHECK(a.portfolio.weights == b.portfolio.weights);
    CHECK(a.kkt_residual <= 1e-8);
}

TEST_CASE("sharpe-maximizing direction") {
    Eigen::VectorXd mu = vec2(0.08, 0.02);
    CHECK((sharpe_max_unconstrained(mu, identity_cov(2)) - mu).norm() <= 1e-14);

    Eigen::MatrixXd d(2, 2);
    d << 4.0, 0.0, 0.0, 1.0;
    const Eigen::VectorXd w = sharpe_max_unconstrained(mu, CovMatrix{d, 0.0});
    CHECK(w(0) == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(w(1) == doctest::Approx(0.02).epsilon(1e-14));

    Rng rng(37);
    const CovMatrix cov = oracle::random_covariance(rng, 5);
    Eigen::VectorXd m(5);
    for (int i = 0; i < 5; ++i) m(i) = rng.normal(0.0, 0.01);
    const Eigen::VectorXd one = sharpe_max_unconstrained(m, cov);
    const Eigen::VectorXd two = sharpe_max_unconstrained(2.0 * m, cov);
    CHECK((two - 2.0 * one).cwiseAbs().maxCoeff() <= 1e-12);

    Eigen::MatrixXd indef(2, 2);
    indef << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS(sharpe_max_unconstrained(mu, CovMatrix{indef, 0.0}),
                    NotPositiveDefiniteError);
}

TEST_CASE("single-asset problems are rejected") {
    Eigen::VectorXd mu(1);
    mu << 0.01;
    CHECK_THROWS_AS(solve_mvo({mu, identity_cov(1), 1.0}), DimensionMismatchError);
}

TEST_CASE("solve counter counts invocations") {
    reset_qp_solve_count();
    CHECK(qp_solve_count() == 0);
    solve_mvo({vec2(0.0, 0.0), identity_cov(2), 1.0});
    solve_mvo({vec2(0.1, 0.0), identity_cov(2), 1.0});
    CHECK(qp_solve_count() == 2);
}
