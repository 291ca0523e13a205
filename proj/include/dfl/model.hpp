#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace dfl {

/// Per-asset return predictor: a shared 30 -> 32 -> 1 tanh MLP applied
/// independently to each asset's lookback row. 1025 parameters.
struct MlpModel {
    static constexpr int kInput = 30;
    static constexpr int kHidden = 32;

    Eigen::MatrixXd w1;  // kHidden x kInput
    Eigen::VectorXd b1;  // kHidden
    Eigen::VectorXd w2;  // kHidden (output layer weights)
    double b2 = 0.0;

    static constexpr int parameter_count() {
        return kHidden * kInput + kHidden + kHidden + 1;
    }
};

/// Gradients shaped exactly like the model parameters.
struct ParamGradient {
    Eigen::MatrixXd w1;
    Eigen::VectorXd b1;
    Eigen::VectorXd w2;
    double b2 = 0.0;

    void set_zero();
    void accumulate(const ParamGradient& other, double weight = 1.0);
    void scale(double factor);
};

/// Activation record from a forward pass, consumed by backward().
struct ForwardTape {
    Eigen::MatrixXd inputs;   // N x kInput
    Eigen::MatrixXd hidden;   // N x kHidden, post-tanh
    const MlpModel* model = nullptr;
};

struct ForwardResult {
    Eigen::VectorXd mu_hat;  // N
    ForwardTape tape;
};

/// mu_hat_i = w2 . tanh(w1 x_i + b1) + b2 per asset row.
ForwardResult forward(const MlpModel& model, const Eigen::MatrixXd& features);

/// Exact reverse-mode parameter gradients for upstream = dL/dmu_hat, summed
/// over assets.
ParamGradient backward(const MlpModel& model, const ForwardTape& tape,
                       const Eigen::VectorXd& upstream);

/// Xavier-uniform weights, zero biases; deterministic per seed.
MlpModel init_model(std::uint64_t seed);

/// Binary checkpoint: magic string, shape header, row-major little-endian
/// 64-bit floats.
void save_model(const MlpModel& model, const std::string& path);
MlpModel load_model(const std::string& path);

}  // namespace dfl
