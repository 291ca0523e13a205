#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dfl/market_data.hpp"
#include "dfl/model.hpp"
#include "dfl/mvo.hpp"

namespace dfl {

/// Random-prediction baseline for normalized decision quality: n_random
/// draws with i.i.d. normal entries of standard deviation baseline_sigma
/// (the cross-sectional std of realized returns on the training split).
struct NdqConfig {
    std::size_t n_random = 1000;
    std::uint64_t seed = 0;
    double baseline_sigma = 0.01;
};

/// Mean over training days of the cross-sectional (across assets) standard
/// deviation of the realized returns; sizes the NDQ baseline draws.
double cross_sectional_sigma(const std::vector<Sample>& samples);

/// Objective value of the decision made from mu_hat, evaluated under the
/// truth: mu_star' w*(mu_hat) - lambda w*(mu_hat)' Sigma w*(mu_hat).
double decision_quality(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                        const CovMatrix& cov, double risk_aversion);

/// (DQ(mu_hat) - DQ_random) / (DQ(mu_star) - DQ_random); 1 for the oracle
/// prediction, 0 in expectation for baseline draws.
double normalized_dq(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                     const CovMatrix& cov, double risk_aversion, const NdqConfig& config);

/// mean(r) / population stddev(r); daily, zero risk-free rate, not
/// annualized.
double sharpe_ratio(const std::vector<double>& daily_returns);

/// prod(1 + r_t); the empty product is 1.
double cumulative_return(const std::vector<double>& daily_returns);

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// SR(mu_star, mu_hat) = (Sigma^-1 mu_hat)' mu_star / sqrt(mu_hat' Sigma^-1
/// mu_hat): the Sharpe ratio of the unconstrained decision from mu_hat under
/// the truth.
double sharpe_of_prediction(const Eigen::VectorXd& mu_star, const Eigen::VectorXd& mu_hat,
                            const CovMatrix& cov);

/// Exact gradient of sharpe_of_prediction with respect to mu_hat:
/// [Sigma^-1 mu_star - (mu_hat'S mu_star / mu_hat'S mu_hat) Sigma^-1 mu_hat]
/// / sqrt(mu_hat'S mu_hat), with S = Sigma^-1.
Eigen::VectorXd sharpe_gradient_analytic(const Eigen::VectorXd& mu_star,
                                         const Eigen::VectorXd& mu_hat, const CovMatrix& cov);

/// One test day of a rolling backtest. Correlation fields are cross-
/// sectional Pearson statistics; NaN marks a day where one side was constant
/// (undefined correlation).
struct DayRecord {
    Date date = 0;
    Eigen::VectorXd mu_hat;
    Eigen::VectorXd weights;      // w*(mu_hat)
    double realized_return = 0;   // w*(mu_hat)' mu_star
    double dq = 0;
    double dq_optimal = 0;
    double regret = 0;
    double ndq = 0;
    double cosine = 0;            // cos(w*(mu_star), w*(mu_hat))
    double corr_sinv_mu = 0;      // Sigma^-1 row means vs mu_hat
    double corr_mse_mu = 0;       // squared errors vs mu_hat
    double corr_sinv_w = 0;       // Sigma^-1 row means vs w*(mu_hat)
    double corr_mu_mu = 0;        // mu_star vs mu_hat
};

struct BacktestResult {
    std::vector<DayRecord> days;
    double sharpe = 0;
    double cumulative = 1.0;
    double mean_ndq = 0;
    double mean_cosine = 0;
    std::size_t degenerate_correlation_days = 0;  // day-statistic pairs skipped
};

/// Daily rolling evaluation of a trained predictor over the test split.
BacktestResult run_backtest(const MlpModel& model, const std::vector<Sample>& test_samples,
                            double risk_aversion, const NdqConfig& ndq);

struct CorrelationStat {
    double mean = 0;
    double stddev = 0;
    std::size_t count = 0;
};

/// Pooled mean/std over all days of all supplied backtests for each
/// cross-sectional correlation.
struct CorrelationReport {
    CorrelationStat sinv_mu;
    CorrelationStat mse_mu;
    CorrelationStat sinv_w;
    CorrelationStat mu_mu;
    std::size_t degenerate_days = 0;
};

CorrelationReport correlation_report(const std::vector<BacktestResult>& backtests);

}  // namespace dfl
