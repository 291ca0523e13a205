#include "dfl/evaluation.hpp"

#include <cmath>
#include <limits>

#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd covariance_inverse(const CovMatrix& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("covariance is not positive definite");
    return llt.solve(Eigen::MatrixXd::Identity(cov.size(), cov.size()));
}

/// Cross-sectional Pearson correlation; NaN when either side is constant.
double pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    const double n = static_cast<double>(x.size());
    const Eigen::VectorXd xc = x.array() - x.mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    const double sx = xc.norm(), sy = yc.norm();
    if (sx == 0.0 || sy == 0.0) return kNaN;
    return xc.dot(yc) / (sx * sy);
}

CorrelationStat pooled_stat(const std::vector<double>& values) {
    CorrelationStat s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.stddev = values.size() > 1 ? std::sqrt(ss / static_cast<double>(values.size() - 1)) : 0.0;
    return s;
}

}  // namespace

double cross_sectional_sigma(const std::vector<Sample>& samples) {
    if (samples.empty()) throw InsufficientHistoryError("no samples");
    double acc = 0.0;
    for (const Sample& s : samples) {
        const double mean = s.target_mu.mean();
        acc += std::sqrt((s.target_mu.array() - mean).square().sum() /
                         static_cast<double>(s.target_mu.size()));
    }
    return acc / static_cast<double>(samples.size());
}

double decision_quality(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                        const CovMatrix& cov, double risk_aversion) {
    const SolveReport report = solve_mvo({mu_hat, cov, risk_aversion});
    return mvo_objective(report.portfolio, mu_star, cov, risk_aversion);
}

double normalized_dq(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                     const CovMatrix& cov, double risk_aversion, const NdqConfig& config) {
    if (config.n_random < 1) throw Error("n_random must be at least 1");
    const double dq_model = decision_quality(mu_hat, mu_star, cov, risk_aversion);
    const double dq_optimal = decision_quality(mu_star, mu_star, cov, risk_aversion);

    Rng rng(derive_seed(config.seed, 0xba5e));
    double dq_sum = 0.0;
    Eigen::VectorXd draw(mu_star.size());
    for (std::size_t k = 0; k < config.n_random; ++k) {
        for (Eigen::Index i = 0; i < draw.size(); ++i)
            draw(i) = rng.normal(0.0, config.baseline_sigma);
        dq_sum += decision_quality(draw, mu_star, cov, risk_aversion);
    }
    const double dq_random = dq_sum / static_cast<double>(config.n_random);

    const double denom = dq_optimal - dq_random;
    if (std::abs(denom) < 1e-12)
        throw DegenerateBaselineError("random baseline coincides with the optimal DQ");
    return (dq_model - dq_random) / denom;
}

double sharpe_ratio(const std::vector<double>& daily_returns) {
    if (daily_returns.size() < 2)
        throw Error("need at least 2 returns for a Sharpe ratio");
    double mean = 0;
    for (double r : daily_returns) mean += r;
    mean /= static_cast<double>(daily_returns.size());
    double var = 0;
    for (double r : daily_returns) var += (r - mean) * (r - mean);
    var /= static_cast<double>(daily_returns.size());  // population
    if (var == 0.0) throw ZeroVolatilityError("return series has zero volatility");
    return mean / std::sqrt(var);
}

double cumulative_return(const std::vector<double>& daily_returns) {
    double prod = 1.0;
    for (double r : daily_returns) {
        if (r <= -1.0) throw TotalLossError("daily return at or below -100%");
        prod *= 1.0 + r;
    }
    return prod;
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("vector lengths disagree");
    const double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw ZeroVectorError("cosine of a zero vector");
    return a.dot(b) / (na * nb);
}

double sharpe_of_prediction(const Eigen::VectorXd& mu_star, const Eigen::VectorXd& mu_hat,
                            const CovMatrix& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("covariance is not positive definite");
    const Eigen::VectorXd sinv_hat = llt.solve(mu_hat);
    const double q = mu_hat.dot(sinv_hat);
    if (q <= 0.0) throw ZeroVectorError("mu_hat has no length under Sigma^-1");
    return sinv_hat.dot(mu_star) / std::sqrt(q);
}

Eigen::VectorXd sharpe_gradient_analytic(const Eigen::VectorXd& mu_star,
                                         const Eigen::VectorXd& mu_hat, const CovMatrix& cov) {
    if (mu_star.size() != mu_hat.size())
        throw DimensionMismatchError("mu_star/mu_hat lengths disagree");
    Eigen::LLT<Eigen::MatrixXd> llt(cov.matrix);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefiniteError("covariance is not positive definite");
    const Eigen::VectorXd sinv_star = llt.solve(mu_star);
    const Eigen::VectorXd sinv_hat = llt.solve(mu_hat);
    const double q = mu_hat.dot(sinv_hat);
    if (q <= 0.0) throw ZeroVectorError("mu_hat has no length under Sigma^-1");
    const double c = mu_hat.dot(sinv_star);
    return (sinv_star - (c / q) * sinv_hat) / std::sqrt(q);
}

BacktestResult run_backtest(const MlpModel& model, const std::vector<Sample>& test_samples,
                            double risk_aversion, const NdqConfig& ndq) {
    if (test_samples.empty()) throw InsufficientHistoryError("empty test split");

    BacktestResult result;
    result.days.reserve(test_samples.size());
    std::vector<double> returns;
    returns.reserve(test_samples.size());
    double ndq_sum = 0, cos_sum = 0;

    for (std::size_t t = 0; t < test_samples.size(); ++t) {
        const Sample& s = test_samples[t];
        DayRecord day;
        day.date = s.date;
        day.mu_hat = forward(model, s.features).mu_hat;

        const SolveReport model_solve = solve_mvo({day.mu_hat, s.cov, risk_aversion});
        const SolveReport optimal_solve = solve_mvo({s.target_mu, s.cov, risk_aversion});
        day.weights = model_solve.portfolio.weights;
        day.realized_return = day.weights.dot(s.target_mu);
        day.dq = mvo_objective(model_solve.portfolio, s.target_mu, s.cov, risk_aversion);
        day.dq_optimal =
            mvo_objective(optimal_solve.portfolio, s.target_mu, s.cov, risk_aversion);
        day.regret = day.dq_optimal - day.dq;
        day.cosine = cosine_similarity(optimal_solve.portfolio.weights, day.weights);

        NdqConfig day_ndq = ndq;
        day_ndq.seed = derive_seed(ndq.seed, 0xdae, t);
        day.ndq = normalized_dq(day.mu_hat, s.target_mu, s.cov, risk_aversion, day_ndq);

        const Eigen::MatrixXd sinv = covariance_inverse(s.cov);
        const Eigen::VectorXd row_means = sinv.rowwise().mean();
        const Eigen::VectorXd sq_err = (s.target_mu - day.mu_hat).array().square();
        day.corr_sinv_mu = pearson(row_means, day.mu_hat);
        day.corr_mse_mu = pearson(sq_err, day.mu_hat);
        day.corr_sinv_w = pearson(row_means, day.weights);
        day.corr_mu_mu = pearson(s.target_mu, day.mu_hat);
        for (double c : {day.corr_sinv_mu, day.corr_mse_mu, day.corr_sinv_w, day.corr_mu_mu})
            if (std::isnan(c)) ++result.degenerate_correlation_days;

        returns.push_back(day.realized_return);
        ndq_sum += day.ndq;
        cos_sum += day.cosine;
        result.days.push_back(std::move(day));
    }

    result.sharpe = sharpe_ratio(returns);
    result.cumulative = cumulative_return(returns);
    result.mean_ndq = ndq_sum / static_cast<double>(test_samples.size());
    result.mean_cosine = cos_sum / static_cast<double>(test_samples.size());
    return result;
}

CorrelationReport correlation_report(const std::vector<BacktestResult>& backtests) {
    std::vector<double> sinv_mu, mse_mu, sinv_w, mu_mu;
    CorrelationReport report;
    for (const BacktestResult& bt : backtests) {
        for (const DayRecord& day : bt.days) {
            auto add = [&report](std::vector<double>& dst, double v) {
                if (std::isnan(v))
                    ++report.degenerate_days;
                else
                    dst.push_back(v);
            };
            add(sinv_mu, day.corr_sinv_mu);
            add(mse_mu, day.corr_mse_mu);
            add(sinv_w, day.corr_sinv_w);
            add(mu_mu, day.corr_mu_mu);
        }
    }
    report.sinv_mu = pooled_stat(sinv_mu);
    report.mse_mu = pooled_stat(mse_mu);
    report.sinv_w = pooled_stat(sinv_w);
    report.mu_mu = pooled_stat(mu_mu);
    return report;
}

}  // namespace dfl
