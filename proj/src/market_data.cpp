#include "dfl/market_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(trim(field));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* begin = s.c_str();
    char* end = nullptr;
    out = std::strtod(begin, &end);
    return end == begin + s.size() && std::isfinite(out);
}

bool is_missing_sentinel(double v) {
    return std::abs(v - (-99.99)) < 1e-9 || std::abs(v - (-999.0)) < 1e-9;
}

// A Fama-French header row: 2+ fields, first empty or non-numeric, the rest
// non-empty asset labels that do not parse as numbers.
bool looks_like_ff_header(const std::vector<std::string>& fields) {
    if (fields.size() < 2) return false;
    double ignored;
    if (parse_double(fields[0], ignored)) return false;
    for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i].empty() || parse_double(fields[i], ignored)) return false;
    }
    return true;
}

}  // namespace

ReturnPanel::ReturnPanel(std::vector<Date> dates_in, std::vector<std::string> assets_in,
                         Eigen::MatrixXd returns_in)
    : dates(std::move(dates_in)), assets(std::move(assets_in)), returns(std::move(returns_in)) {
    if (assets.size() < 2) throw MalformedRowError("panel needs at least 2 assets");
    if (dates.size() != static_cast<std::size_t>(returns.rows()) ||
        assets.size() != static_cast<std::size_t>(returns.cols()))
        throw DimensionMismatchError("panel dates/assets do not match the return matrix");
    for (std::size_t t = 1; t < dates.size(); ++t) {
        if (dates[t] <= dates[t - 1])
            throw NonMonotoneDatesError("dates not strictly increasing at row " +
                                        std::to_string(t) + " (" + format_iso_date(dates[t]) +
                                        ")");
    }
    if (!returns.allFinite()) throw MalformedRowError("panel contains non-finite returns");
}

ReturnPanel parse_returns_csv(std::istream& in, CsvFormat format) {
    std::string line;
    std::vector<std::string> assets;

    // Locate the header. plain_decimal requires it on the first line;
    // ff_percent files may carry prose preamble before it.
    bool have_header = false;
    while (std::getline(in, line)) {
        const auto fields = split_fields(line);
        if (format == CsvFormat::plain_decimal) {
            if (fields.size() < 3 || fields[0] != "date")
                throw MalformedRowError("expected header 'date,<asset>,...'");
            assets.assign(fields.begin() + 1, fields.end());
            have_header = true;
            break;
        }
        if (looks_like_ff_header(fields)) {
            assets.assign(fields.begin() + 1, fields.end());
            have_header = true;
            break;
        }
    }
    if (!have_header) throw MalformedRowError("no header row found");
    const std::size_t n_assets = assets.size();
    if (n_assets < 2) throw MalformedRowError("header names fewer than 2 assets");

    std::vector<Date> dates;
    std::vector<double> values;
    std::size_t data_row = 0;
    while (std::getline(in, line)) {
        const std::string stripped = trim(line);
        if (stripped.empty()) {
            if (!dates.empty()) break;  // blank line ends the data section
            continue;
        }
        const auto fields = split_fields(line);
        const Date date = format == CsvFormat::ff_percent ? parse_compact_date(fields[0])
                                                          : parse_iso_date(fields[0]);
        if (date == 0) {
            // FF files append further sections after the data block; stop at
            // the first non-date line once rows have been read.
            if (format == CsvFormat::ff_percent && !dates.empty()) break;
            throw MalformedRowError("row " + std::to_string(data_row + 1) +
                                    ": unparseable date '" + fields[0] + "'");
        }
        if (fields.size() != n_assets + 1)
            throw MalformedRowError("row " + std::to_string(data_row + 1) + ": expected " +
                                    std::to_string(n_assets + 1) + " fields, got " +
                                    std::to_string(fields.size()));
        if (!dates.empty() && date <= dates.back())
            throw NonMonotoneDatesError("row " + std::to_string(data_row + 1) +
                                        ": date " + format_iso_date(date) +
                                        " not after " + format_iso_date(dates.back()));
        for (std::size_t j = 0; j < n_assets; ++j) {
            double v;
            if (!parse_double(fields[j + 1], v))
                throw MalformedRowError("row " + std::to_string(data_row + 1) +
                                        ": unparseable value '" + fields[j + 1] + "'");
            if (is_missing_sentinel(v))
                throw MissingValueError("missing-data sentinel at row " +
                                            std::to_string(data_row + 1) + ", asset '" +
                                            assets[j] + "'",
                                        data_row, j);
            values.push_back(format == CsvFormat::ff_percent ? v / 100.0 : v);
        }
        dates.push_back(date);
        ++data_row;
    }
    if (dates.empty()) throw MalformedRowError("no data rows found");

    Eigen::MatrixXd returns(dates.size(), n_assets);
    for (std::size_t t = 0; t < dates.size(); ++t)
        for (std::size_t j = 0; j < n_assets; ++j)
            returns(t, j) = values[t * n_assets + j];
    return ReturnPanel(std::move(dates), std::move(assets), std::move(returns));
}

ReturnPanel parse_returns_csv_file(const std::string& path, CsvFormat format) {
    std::ifstream in(path);
    if (!in) throw MalformedRowError("cannot open '" + path + "'");
    return parse_returns_csv(in, format);
}

void write_returns_csv(std::ostream& out, const ReturnPanel& panel) {
    out << "date";
    for (const auto& a : panel.assets) out << ',' << a;
    out << '\n';
    char buf[32];
    for (Eigen::Index t = 0; t < panel.days(); ++t) {
        out << format_iso_date(panel.dates[t]);
        for (Eigen::Index j = 0; j < panel.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", panel.returns(t, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

void write_returns_csv_file(const std::string& path, const ReturnPanel& panel) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    write_returns_csv(out, panel);
}

CovMatrix sample_covariance(const Eigen::MatrixXd& window, double ridge) {
    const Eigen::Index L = window.rows();
    const Eigen::Index n = window.cols();
    if (L < 2) throw DegenerateWindowError("covariance window needs at least 2 rows");
    if (ridge < 0) throw Error("ridge must be non-negative");

    const Eigen::RowVectorXd mean = window.colwise().mean();
    const Eigen::MatrixXd centered = window.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / double(L - 1);
    cov = ((cov + cov.transpose()) / 2.0).eval();  // kill rounding asymmetry
    cov.diagonal().array() += ridge;

    // A sample covariance is PSD by construction; reject only genuinely
    // indefinite results (numerical breakdown). Strict definiteness is
    // checked where a factorization is actually taken.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() < -1e-12)
        throw NotPositiveDefiniteError("covariance not PSD even after ridge");
    return CovMatrix{std::move(cov), ridge};
}

std::vector<Sample> make_samples(const ReturnPanel& panel, std::size_t lookback, double ridge) {
    const std::size_t T = static_cast<std::size_t>(panel.days());
    if (T <= lookback)
        throw InsufficientHistoryError("panel has " + std::to_string(T) +
                                       " rows; need more than " + std::to_string(lookback));
    const Eigen::Index n = panel.size();
    const Eigen::Index L = static_cast<Eigen::Index>(lookback);

    std::vector<Sample> samples;
    samples.reserve(T - lookback);
    for (std::size_t k = 0; k + lookback < T; ++k) {
        const Eigen::MatrixXd window =
            panel.returns.block(static_cast<Eigen::Index>(k), 0, L, n);
        Sample s;
        s.date = panel.dates[k + lookback];
        s.features = window.transpose();  // N x L, oldest column first
        s.target_mu = panel.returns.row(static_cast<Eigen::Index>(k + lookback)).transpose();
        s.cov = sample_covariance(window, ridge);
        samples.push_back(std::move(s));
    }
    return samples;
}

SampleSplits split_samples(const std::vector<Sample>& samples, const SplitSpec& spec) {
    if (spec.train_len == 0 || spec.valid_len == 0 || spec.test_len == 0)
        throw Error("split lengths must be positive");
    const std::size_t need = spec.train_len + spec.valid_len + spec.test_len;
    if (samples.size() < need)
        throw InsufficientHistoryError("need " + std::to_string(need) + " samples, have " +
                                       std::to_string(samples.size()));
    SampleSplits out;
    out.train.assign(samples.begin(), samples.begin() + spec.train_len);
    out.valid.assign(samples.begin() + spec.train_len,
                     samples.begin() + spec.train_len + spec.valid_len);
    out.test.assign(samples.begin() + spec.train_len + spec.valid_len,
                    samples.begin() + need);
    return out;
}

ReturnPanel generate_synthetic(std::uint64_t seed, std::size_t n_assets, std::size_t n_days,
                               std::size_t k_factors, double noise_scale) {
    if (n_assets < 2) throw Error("need at least 2 assets");
    if (n_days <= 31) throw Error("need more than 31 days");
    if (k_factors < 1) throw Error("need at least 1 factor");
    if (noise_scale < 0) throw Error("noise_scale must be non-negative");

    // Factor persistences alternate in sign so that the best forecasting rule
    // differs across assets: a single shared predictor cannot fit every asset
    // and loss weighting matters. Per-asset idiosyncratic vols are drawn from
    // a band, so positions (and prediction errors) differ in how much they
    // cost. The base volatility is deliberately high for daily data: it makes
    // the quadratic risk term material across the whole lambda grid instead
    // of letting the linear term force all-in corner portfolios.
    const double base_vol = kSyntheticBaseVol;
    constexpr std::array<double, 4> persistences = {0.9, -0.6, 0.4, -0.3};

    Rng rng(derive_seed(seed, 0xda7a));
    const Eigen::Index n = static_cast<Eigen::Index>(n_assets);
    const Eigen::Index T = static_cast<Eigen::Index>(n_days);
    const Eigen::Index k = static_cast<Eigen::Index>(k_factors);

    // Positive loadings keep single-factor returns perfectly positively
    // correlated; rows are normalized so total factor exposure stays near
    // base_vol regardless of k_factors.
    Eigen::MatrixXd loadings(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) loadings(i, j) = rng.uniform(0.8, 1.3);
    for (Eigen::Index i = 0; i < n; ++i) loadings.row(i) /= std::sqrt(double(k));

    Eigen::VectorXd idio_vol(n), drift(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double vol_mult = rng.uniform(0.5, 1.5);
        idio_vol(i) = noise_scale * base_vol * vol_mult;
        // risk premium: volatile assets carry a small stable drift, pulling
        // the optimal portfolio away from minimum variance so predictions
        // must carry covariance-linked structure to decide well
        drift(i) = 0.02 * base_vol * vol_mult * vol_mult * vol_mult;
    }

    // Stationary std of every factor = base_vol.
    Eigen::VectorXd factors(k), innov_std(k), phis(k);
    for (Eigen::Index j = 0; j < k; ++j) {
        phis(j) = persistences[static_cast<std::size_t>(j) % persistences.size()];
        innov_std(j) = base_vol * std::sqrt(1.0 - phis(j) * phis(j));
        factors(j) = rng.normal(0.0, base_vol);
    }

    // Idiosyncratic shocks are drawn first and exactly demeaned per asset,
    // so finite-sample noise does not masquerade as per-asset drift.
    Eigen::MatrixXd shocks(T, n);
    for (Eigen::Index t = 0; t < T; ++t)
        for (Eigen::Index i = 0; i < n; ++i) shocks(t, i) = rng.normal(0.0, idio_vol(i));
    shocks.rowwise() -= shocks.colwise().mean();

    Eigen::MatrixXd returns(T, n);
    std::vector<Date> dates;
    dates.reserve(n_days);
    Date d = 20190101;
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index j = 0; j < k; ++j)
            factors(j) = phis(j) * factors(j) + rng.normal(0.0, innov_std(j));
        for (Eigen::Index i = 0; i < n; ++i)
            returns(t, i) = drift(i) + loadings.row(i).dot(factors) + shocks(t, i);
        dates.push_back(d);
        d = next_date(d);
    }

    std::vector<std::string> assets;
    for (std::size_t i = 0; i < n_assets; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "A%02llu", static_cast<unsigned long long>(i + 1));
        assets.emplace_back(buf);
    }
    return ReturnPanel(std::move(dates), std::move(assets), std::move(returns));
}

}  // namespace dfl
