#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dfl/evaluation.hpp"
#include "dfl/market_data.hpp"
#include "dfl/training.hpp"

namespace dfl {

struct SyntheticSpec {
    std::uint64_t seed = 7;
    std::size_t assets = 10;
    std::size_t days = 630;
    std::size_t factors = 3;
    double noise_scale = 1.0;
};

/// Full grid experiment description; loaded from a versioned JSON document
/// with flat keys (see README for the schema).
struct ExperimentConfig {
    std::string dataset_path;               // plain_decimal CSV, or
    std::optional<SyntheticSpec> synthetic; // generated in-process
    std::size_t lookback = 30;
    double ridge = 1e-8;
    SplitSpec split;
    std::vector<double> alpha_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> lambda_grid = {1.0, 3.0, 5.0, 10.0};
    std::size_t seeds = 5;
    std::uint64_t base_seed = 1;
    std::size_t max_iterations = 5000;
    std::size_t patience = 100;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    double mse_scale = 10.0;
    std::size_t ndq_random = 1000;
    std::uint64_t ndq_seed = 99;
    std::string output_dir;
};

ExperimentConfig load_experiment_config(const std::string& path);

/// Seed for one grid run; mixing indices (not values) keeps existing cells
/// stable when grid points are added.
std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t alpha_index,
                        std::size_t lambda_index, std::size_t repetition);

/// FNV-1a 64-bit over a file's bytes, formatted "fnv1a64:<hex>".
std::string file_checksum(const std::string& path);

// --- CLI entry points (thin argv wrappers live in tools/) ---
// Exit codes: 0 success, 1 usage, 2 input/data, 3 numerical failure,
// 4 partial grid failure.

struct PrepareArgs {
    bool synthetic = false;
    SyntheticSpec synthetic_spec;
    std::string input_path;
    std::string format = "ff_percent";  // or plain_decimal
    std::string output_dir;
};
int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err);

struct TrainArgs {
    std::string dataset_path;
    double alpha = 0.0;
    double lambda = 1.0;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::size_t lookback = 30;
    double ridge = 1e-8;
    SplitSpec split;
    std::size_t max_iterations = 5000;
    std::size_t patience = 100;
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    double mse_scale = 10.0;
};
int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);

struct GridArgs {
    std::string config_path;
    std::string output_dir_override;
    std::size_t jobs = 1;
};
int cmd_grid(const GridArgs& args, std::ostream& out, std::ostream& err);

struct ReportArgs {
    std::string run_dir;
};
int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err);

// --- pieces exposed for tests ---

struct RunMetrics {
    double alpha = 0;
    double lambda = 0;
    std::size_t seed_index = 0;
    std::uint64_t run_seed = 0;
    double ndq = 0;
    double mvo_loss = 0;   // mean per-day regret on the test split
    double mse_loss = 0;   // mean per-day scaled MSE on the test split
    double sharpe = 0;
    double cumulative = 0;
    double cosine = 0;
    // per-run day statistics as (mean, sum of squared deviations, count) so
    // cells pool exactly across seeds
    struct Moments {
        double mean = 0;
        double m2 = 0;
        std::size_t n = 0;
    };
    Moments corr_sinv_mu, corr_mse_mu, corr_sinv_w, corr_mu_mu;
    std::uint64_t degenerate_jacobians = 0;
    std::size_t stopping_iteration = 0;
    double best_valid_loss = 0;
};

/// Trains and backtests one (alpha, lambda, seed) run, writing model.bin,
/// train_log.csv, backtest.csv and metrics.json into run_dir.
RunMetrics run_single(const ExperimentConfig& config, const SampleSplits& splits,
                      double alpha, double lambda, std::size_t alpha_index,
                      std::size_t lambda_index, std::size_t repetition,
                      const std::string& run_dir);

}  // namespace dfl
