#include "dfl/training.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "dfl/diffopt.hpp"
#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

namespace {

/// Minimization-form objective f(w, mu) = lambda w'Sigma w - mu'w.
double min_objective(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                     const CovMatrix& cov, double lambda) {
    return lambda * w.dot(cov.matrix * w) - mu.dot(w);
}

struct AdamState {
    ParamGradient m;
    ParamGradient v;
    std::size_t t = 0;

    explicit AdamState() {
        m.set_zero();
        v.set_zero();
    }

    void step(MlpModel& model, const ParamGradient& grad, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        ++t;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));

        auto update = [&](auto& m_p, auto& v_p, const auto& g, auto& theta) {
            m_p = beta1 * m_p.array() + (1.0 - beta1) * g.array();
            v_p = beta2 * v_p.array() + (1.0 - beta2) * g.array().square();
            theta -=
                (lr * (m_p.array() / bc1) / ((v_p.array() / bc2).sqrt() + eps)).matrix();
        };
        update(m.w1, v.w1, grad.w1, model.w1);
        update(m.b1, v.b1, grad.b1, model.b1);
        update(m.w2, v.w2, grad.w2, model.w2);
        m.b2 = beta1 * m.b2 + (1.0 - beta1) * grad.b2;
        v.b2 = beta2 * v.b2 + (1.0 - beta2) * grad.b2 * grad.b2;
        model.b2 -= lr * (m.b2 / bc1) / (std::sqrt(v.b2 / bc2) + eps);
    }
};

}  // namespace

double mse_loss(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star, double scale) {
    if (mu_hat.size() != mu_star.size())
        throw DimensionMismatchError("mu_hat/mu_star lengths disagree");
    if (!(scale > 0)) throw Error("mse scale must be positive");
    return scale * (mu_star - mu_hat).squaredNorm() / static_cast<double>(mu_hat.size());
}

Eigen::VectorXd mse_gradient(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                             double scale) {
    if (mu_hat.size() != mu_star.size())
        throw DimensionMismatchError("mu_hat/mu_star lengths disagree");
    return (2.0 * scale / static_cast<double>(mu_hat.size())) * (mu_hat - mu_star);
}

LossValueGrad combined_loss(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                            const CovMatrix& cov, const LossConfig& config) {
    if (config.alpha < 0.0 || config.alpha > 1.0) throw Error("alpha must lie in [0, 1]");
    LossValueGrad out;
    out.gradient = Eigen::VectorXd::Zero(mu_hat.size());

    if (config.alpha > 0.0) {
        const MvoProblem problem{mu_hat, cov, config.risk_aversion};
        const SolveReport report = solve_mvo(problem);
        const SolveReport opt = solve_mvo({mu_star, cov, config.risk_aversion});
        const double reg =
            min_objective(report.portfolio.weights, mu_star, cov, config.risk_aversion) -
            min_objective(opt.portfolio.weights, mu_star, cov, config.risk_aversion);

        const SolutionJacobian jac = solution_jacobian(report, problem);
        out.degenerate_jacobian = jac.degenerate_active_set;
        const Eigen::VectorXd loss_grad =
            2.0 * config.risk_aversion * (cov.matrix * report.portfolio.weights) - mu_star;
        out.value += config.alpha * reg;
        out.gradient += config.alpha * (jac.matrix.transpose() * loss_grad);
    }
    if (config.alpha < 1.0) {
        out.value += (1.0 - config.alpha) * mse_loss(mu_hat, mu_star, config.mse_scale);
        out.gradient += (1.0 - config.alpha) * mse_gradient(mu_hat, mu_star, config.mse_scale);
    }
    return out;
}

double combined_loss_value(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                           const CovMatrix& cov, const LossConfig& config,
                           double optimal_objective) {
    if (config.alpha < 0.0 || config.alpha > 1.0) throw Error("alpha must lie in [0, 1]");
    double value = 0.0;
    if (config.alpha > 0.0) {
        double f_star = optimal_objective;
        if (std::isnan(f_star)) {
            const SolveReport opt = solve_mvo({mu_star, cov, config.risk_aversion});
            f_star = min_objective(opt.portfolio.weights, mu_star, cov, config.risk_aversion);
        }
        const SolveReport report = solve_mvo({mu_hat, cov, config.risk_aversion});
        const double f_hat =
            min_objective(report.portfolio.weights, mu_star, cov, config.risk_aversion);
        value += config.alpha * (f_hat - f_star);
    }
    if (config.alpha < 1.0)
        value += (1.0 - config.alpha) * mse_loss(mu_hat, mu_star, config.mse_scale);
    return value;
}

TrainResult train(const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& valid_samples, std::uint64_t model_seed,
                  const LossConfig& loss_config, const TrainConfig& train_config) {
    if (train_samples.empty() || valid_samples.empty())
        throw InsufficientHistoryError("train/valid splits must be non-empty");
    if (loss_config.alpha < 0.0 || loss_config.alpha > 1.0)
        throw Error("alpha must lie in [0, 1]");
    if (train_config.batch_size == 0 || train_config.max_iterations == 0 ||
        train_config.patience == 0 || !(train_config.learning_rate > 0))
        throw Error("train config fields must be positive");

    // f(w*(mu_star), mu_star) is prediction-independent; solve it once per
    // sample. Skipped entirely at alpha = 0 so pure-MSE training never
    // touches the solver.
    const bool uses_qp = loss_config.alpha > 0.0;
    std::vector<double> train_opt(train_samples.size(),
                                  std::numeric_limits<double>::quiet_NaN());
    std::vector<double> valid_opt(valid_samples.size(),
                                  std::numeric_limits<double>::quiet_NaN());
    if (uses_qp) {
        for (std::size_t i = 0; i < train_samples.size(); ++i) {
            const Sample& s = train_samples[i];
            const SolveReport opt = solve_mvo({s.target_mu, s.cov, loss_config.risk_aversion});
            train_opt[i] = min_objective(opt.portfolio.weights, s.target_mu, s.cov,
                                         loss_config.risk_aversion);
        }
        for (std::size_t i = 0; i < valid_samples.size(); ++i) {
            const Sample& s = valid_samples[i];
            const SolveReport opt = solve_mvo({s.target_mu, s.cov, loss_config.risk_aversion});
            valid_opt[i] = min_objective(opt.portfolio.weights, s.target_mu, s.cov,
                                         loss_config.risk_aversion);
        }
    }

    MlpModel model = init_model(model_seed);
    MlpModel best_model = model;
    AdamState adam;
    Rng shuffle_rng(derive_seed(train_config.seed, 0x5f17));

    TrainRecord record;
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t evals_since_best = 0;
    std::size_t iteration = 0;
    std::uint64_t degenerate_events = 0;
    bool stop = false;

    std::vector<std::size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto sample_loss = [&](const Sample& s, double f_star, bool with_grad,
                           LossValueGrad* out) -> double {
        const ForwardResult fwd = forward(model, s.features);
        if (with_grad) {
            *out = combined_loss(fwd.mu_hat, s.target_mu, s.cov, loss_config);
            return out->value;
        }
        return combined_loss_value(fwd.mu_hat, s.target_mu, s.cov, loss_config, f_star);
    };

    while (!stop) {
        shuffle_rng.shuffle(order);
        double epoch_loss_sum = 0.0;
        std::size_t epoch_loss_count = 0;

        for (std::size_t start = 0; start < order.size() && iteration < train_config.max_iterations;
             start += train_config.batch_size) {
            const std::size_t end = std::min(start + train_config.batch_size, order.size());
            ParamGradient grad_sum;
            grad_sum.set_zero();
            double batch_loss = 0.0;

            for (std::size_t k = start; k < end; ++k) {
                const Sample& s = train_samples[order[k]];
                const ForwardResult fwd = forward(model, s.features);
                LossValueGrad loss = combined_loss(fwd.mu_hat, s.target_mu, s.cov, loss_config);
                if (!std::isfinite(loss.value) || !loss.gradient.allFinite())
                    throw NonFiniteLossError(
                        "non-finite loss at iteration " + std::to_string(iteration) +
                        ", sample " + std::to_string(order[k]) +
                        " (value=" + std::to_string(loss.value) + ")");
                if (loss.degenerate_jacobian) ++degenerate_events;
                const ParamGradient pg = backward(model, fwd.tape, loss.gradient);
                grad_sum.accumulate(pg);
                batch_loss += loss.value;
            }
            const double inv_n = 1.0 / static_cast<double>(end - start);
            grad_sum.scale(inv_n);
            adam.step(model, grad_sum, train_config.learning_rate);
            epoch_loss_sum += batch_loss;
            epoch_loss_count += end - start;
            ++iteration;
        }

        // Validation evaluation (once per pass over the training set).
        double valid_sum = 0.0;
        for (std::size_t i = 0; i < valid_samples.size(); ++i)
            valid_sum += sample_loss(valid_samples[i], valid_opt[i], false, nullptr);
        const double valid_loss = valid_sum / static_cast<double>(valid_samples.size());
        const double train_loss =
            epoch_loss_count > 0 ? epoch_loss_sum / static_cast<double>(epoch_loss_count)
                                 : std::numeric_limits<double>::quiet_NaN();
        if (!std::isfinite(valid_loss))
            throw NonFiniteLossError("non-finite validation loss at iteration " +
                                     std::to_string(iteration));

        record.history.push_back({iteration, train_loss, valid_loss, degenerate_events});
        if (valid_loss < best_loss) {
            best_loss = valid_loss;
            best_model = model;
            record.best_evaluation = record.history.size() - 1;
            evals_since_best = 0;
        } else {
            ++evals_since_best;
        }
        if (evals_since_best >= train_config.patience) stop = true;
        if (iteration >= train_config.max_iterations) stop = true;
    }

    record.stopping_iteration = iteration;
    record.best_valid_loss = best_loss;
    record.degenerate_jacobians = degenerate_events;
    return TrainResult{std::move(best_model), std::move(record)};
}

}  // namespace dfl
