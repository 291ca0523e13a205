#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dfl/dates.hpp"

namespace dfl {

/// Dated matrix of daily simple returns in decimal units (0.01 = 1%).
/// Rows are days, columns are assets. Dates are strictly increasing and all
/// entries are finite; both are enforced at construction.
struct ReturnPanel {
    std::vector<Date> dates;
    std::vector<std::string> assets;
    Eigen::MatrixXd returns;  // T x N

    ReturnPanel(std::vector<Date> dates, std::vector<std::string> assets,
                Eigen::MatrixXd returns);

    Eigen::Index days() const { return returns.rows(); }
    Eigen::Index size() const { return returns.cols(); }
};

/// N x N sample covariance with a non-negative ridge already added on the
/// diagonal. Symmetric within 1e-12; positive definite whenever ridge > 0.
struct CovMatrix {
    Eigen::MatrixXd matrix;
    double ridge = 0.0;

    Eigen::Index size() const { return matrix.rows(); }
};

/// One training instance: per-asset feature rows (N x L, oldest column
/// first), the realized next-day returns, and the covariance estimated from
/// the same lookback window.
struct Sample {
    Date date = 0;             // date of the target row
    Eigen::MatrixXd features;  // N x L
    Eigen::VectorXd target_mu; // N
    CovMatrix cov;
};

struct SplitSpec {
    std::size_t train_len = 400;
    std::size_t valid_len = 100;
    std::size_t test_len = 100;
};

enum class CsvFormat { ff_percent, plain_decimal };

/// Parses a returns CSV. ff_percent skips any preamble before the header row,
/// reads YYYYMMDD dates and divides values by 100; plain_decimal expects a
/// `date,<asset>...` header with ISO-8601 dates and decimal returns. The
/// Fama-French missing-data sentinels (-99.99, -999) are hard errors.
ReturnPanel parse_returns_csv(std::istream& in, CsvFormat format);
ReturnPanel parse_returns_csv_file(const std::string& path, CsvFormat format);

/// Writes a panel in plain_decimal form with enough digits that re-parsing
/// reproduces it exactly.
void write_returns_csv(std::ostream& out, const ReturnPanel& panel);
void write_returns_csv_file(const std::string& path, const ReturnPanel& panel);

/// Unbiased (L-1 divisor) sample covariance of an L x N window plus ridge on
/// the diagonal.
CovMatrix sample_covariance(const Eigen::MatrixXd& window, double ridge);

/// Rolling samples: sample k uses panel rows [k, k+lookback) as features and
/// covariance window and row k+lookback as the target.
std::vector<Sample> make_samples(const ReturnPanel& panel, std::size_t lookback = 30,
                                 double ridge = 1e-8);

struct SampleSplits {
    std::vector<Sample> train;
    std::vector<Sample> valid;
    std::vector<Sample> test;
};

/// Contiguous chronological partition of the first train+valid+test samples.
SampleSplits split_samples(const std::vector<Sample>& samples, const SplitSpec& spec);

/// Base daily volatility of the synthetic market. High for daily data so
/// the risk term shapes portfolios across the whole lambda grid.
inline constexpr double kSyntheticBaseVol = 0.07;

/// Synthetic daily returns r_t = B f_t + eps_t with positive factor loadings
/// drawn from the seed and AR(1) factors of alternating persistence, so a
/// 30-day window carries signal about the next day and no single shared
/// predictor fits every asset equally well. noise_scale sizes per-asset
/// idiosyncratic vol relative to kSyntheticBaseVol. Deterministic per seed.
ReturnPanel generate_synthetic(std::uint64_t seed, std::size_t n_assets, std::size_t n_days,
                               std::size_t k_factors, double noise_scale);

}  // namespace dfl
