#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "dfl/market_data.hpp"
#include "dfl/model.hpp"
#include "dfl/mvo.hpp"

namespace dfl {

/// Combined-loss weights: alpha interpolates between scaled MSE (alpha=0)
/// and MVO regret (alpha=1); mse_scale matches the two terms' magnitudes.
struct LossConfig {
    double alpha = 0.0;           // in [0, 1]
    double risk_aversion = 1.0;   // lambda > 0
    double mse_scale = 10.0;
};

struct TrainConfig {
    std::size_t max_iterations = 5000;  // mini-batch steps
    std::size_t patience = 100;         // validation evaluations without improvement
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;             // batch shuffling
};

struct EvalRecord {
    std::size_t iteration = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::uint64_t degenerate_jacobians = 0;  // cumulative
};

struct TrainRecord {
    std::vector<EvalRecord> history;
    std::size_t stopping_iteration = 0;
    std::size_t best_evaluation = 0;   // index into history
    double best_valid_loss = 0.0;
    std::uint64_t degenerate_jacobians = 0;
};

struct TrainResult {
    MlpModel model;  // best-validation checkpoint
    TrainRecord record;
};

/// scale * (1/N) sum (mu_star_i - mu_hat_i)^2.
double mse_loss(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star, double scale);

/// d mse_loss / d mu_hat.
Eigen::VectorXd mse_gradient(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                             double scale);

struct LossValueGrad {
    double value = 0.0;
    Eigen::VectorXd gradient;  // w.r.t. mu_hat
    bool degenerate_jacobian = false;
};

/// alpha * regret + (1-alpha) * scaled MSE, with its gradient w.r.t. mu_hat.
/// alpha = 0 never touches the QP solver.
LossValueGrad combined_loss(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                            const CovMatrix& cov, const LossConfig& config);

/// Value-only variant; optimal_objective, when non-NaN, supplies the
/// precomputed f(w*(mu_star), mu_star) so only one solve is needed.
double combined_loss_value(const Eigen::VectorXd& mu_hat, const Eigen::VectorXd& mu_star,
                           const CovMatrix& cov, const LossConfig& config,
                           double optimal_objective = std::numeric_limits<double>::quiet_NaN());

/// Mini-batch Adam over the combined loss with per-epoch validation and
/// early stopping; returns the best-validation checkpoint. Deterministic for
/// fixed seeds.
TrainResult train(const std::vector<Sample>& train_samples,
                  const std::vector<Sample>& valid_samples, std::uint64_t model_seed,
                  const LossConfig& loss_config, const TrainConfig& train_config);

}  // namespace dfl
