#include "dfl/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "dfl/errors.hpp"
#include "dfl/rng.hpp"

namespace dfl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), format, v);
    return buf;
}

std::string fmt6(double v) { return fmt("%.6g", v); }
std::string fmt17(double v) { return fmt("%.17g", v); }

int exit_code_for(const Error& e) {
    if (dynamic_cast<const NumericalFailureError*>(&e) ||
        dynamic_cast<const NonConvergenceError*>(&e) ||
        dynamic_cast<const NotPositiveDefiniteError*>(&e) ||
        dynamic_cast<const NonFiniteLossError*>(&e))
        return 3;
    return 2;
}

json moments_to_json(const RunMetrics::Moments& m) {
    return json{{"mean", m.mean}, {"m2", m.m2}, {"n", m.n}};
}

RunMetrics::Moments moments_from_json(const json& j) {
    RunMetrics::Moments m;
    m.mean = j.at("mean").get<double>();
    m.m2 = j.at("m2").get<double>();
    m.n = j.at("n").get<std::size_t>();
    return m;
}

json metrics_to_json(const RunMetrics& m) {
    return json{{"alpha", m.alpha},
                {"lambda", m.lambda},
                {"seed_index", m.seed_index},
                {"run_seed", m.run_seed},
                {"ndq", m.ndq},
                {"mvo_loss", m.mvo_loss},
                {"mse_loss", m.mse_loss},
                {"sharpe", m.sharpe},
                {"cumulative_return", m.cumulative},
                {"cosine", m.cosine},
                {"corr_sinv_mu", moments_to_json(m.corr_sinv_mu)},
                {"corr_mse_mu", moments_to_json(m.corr_mse_mu)},
                {"corr_sinv_w", moments_to_json(m.corr_sinv_w)},
                {"corr_mu_mu", moments_to_json(m.corr_mu_mu)},
                {"degenerate_jacobians", m.degenerate_jacobians},
                {"stopping_iteration", m.stopping_iteration},
                {"best_valid_loss", m.best_valid_loss}};
}

RunMetrics metrics_from_json(const json& j) {
    RunMetrics m;
    m.alpha = j.at("alpha").get<double>();
    m.lambda = j.at("lambda").get<double>();
    m.seed_index = j.at("seed_index").get<std::size_t>();
    m.run_seed = j.at("run_seed").get<std::uint64_t>();
    m.ndq = j.at("ndq").get<double>();
    m.mvo_loss = j.at("mvo_loss").get<double>();
    m.mse_loss = j.at("mse_loss").get<double>();
    m.sharpe = j.at("sharpe").get<double>();
    m.cumulative = j.at("cumulative_return").get<double>();
    m.cosine = j.at("cosine").get<double>();
    m.corr_sinv_mu = moments_from_json(j.at("corr_sinv_mu"));
    m.corr_mse_mu = moments_from_json(j.at("corr_mse_mu"));
    m.corr_sinv_w = moments_from_json(j.at("corr_sinv_w"));
    m.corr_mu_mu = moments_from_json(j.at("corr_mu_mu"));
    m.degenerate_jacobians = j.at("degenerate_jacobians").get<std::uint64_t>();
    m.stopping_iteration = j.at("stopping_iteration").get<std::size_t>();
    m.best_valid_loss = j.at("best_valid_loss").get<double>();
    return m;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << content;
    if (!out) throw Error("failed writing '" + path + "'");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open '" + path + "'");
    json j;
    in >> j;
    return j;
}

RunMetrics::Moments day_moments(const std::vector<double>& values) {
    RunMetrics::Moments m;
    std::vector<double> finite;
    for (double v : values)
        if (!std::isnan(v)) finite.push_back(v);
    m.n = finite.size();
    if (finite.empty()) return m;
    double sum = 0;
    for (double v : finite) sum += v;
    m.mean = sum / static_cast<double>(finite.size());
    for (double v : finite) m.m2 += (v - m.mean) * (v - m.mean);
    return m;
}

RunMetrics::Moments pool_moments(const RunMetrics::Moments& a, const RunMetrics::Moments& b) {
    if (a.n == 0) return b;
    if (b.n == 0) return a;
    RunMetrics::Moments out;
    out.n = a.n + b.n;
    const double delta = b.mean - a.mean;
    const double na = static_cast<double>(a.n), nb = static_cast<double>(b.n);
    out.mean = a.mean + delta * nb / (na + nb);
    out.m2 = a.m2 + b.m2 + delta * delta * na * nb / (na + nb);
    return out;
}

double moments_std(const RunMetrics::Moments& m) {
    return m.n > 1 ? std::sqrt(m.m2 / static_cast<double>(m.n - 1)) : 0.0;
}

struct MeanStd {
    double mean = 0;
    double stddev = 0;
};

MeanStd mean_std(const std::vector<double>& values) {
    MeanStd out;
    if (values.empty()) return out;
    double sum = 0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0;
        for (double v : values) ss += (v - out.mean) * (v - out.mean);
        out.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return out;
}

struct CellOutcome {
    std::size_t alpha_index = 0;
    std::size_t lambda_index = 0;
    bool ok = false;
    std::string error;
    std::vector<RunMetrics> runs;
};

std::string cell_dir_name(std::size_t alpha_index, std::size_t lambda_index) {
    return "a" + std::to_string(alpha_index) + "_l" + std::to_string(lambda_index);
}

}  // namespace

std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t alpha_index,
                        std::size_t lambda_index, std::size_t repetition) {
    return derive_seed(base_seed, alpha_index, lambda_index, repetition);
}

std::string file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            hash ^= static_cast<unsigned char>(buf[i]);
            hash *= 0x100000001b3ULL;
        }
        if (!in) break;
    }
    char out[32];
    std::snprintf(out, sizeof(out), "fnv1a64:%016llx", static_cast<unsigned long long>(hash));
    return out;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    const json j = read_json_file(path);
    if (!j.contains("version") || j.at("version").get<int>() != 1)
        throw Error("config must declare \"version\": 1");

    ExperimentConfig c;
    if (j.contains("dataset")) c.dataset_path = j.at("dataset").get<std::string>();
    if (j.contains("synthetic")) {
        const json& s = j.at("synthetic");
        SyntheticSpec spec;
        if (s.contains("seed")) spec.seed = s.at("seed").get<std::uint64_t>();
        if (s.contains("assets")) spec.assets = s.at("assets").get<std::size_t>();
        if (s.contains("days")) spec.days = s.at("days").get<std::size_t>();
        if (s.contains("factors")) spec.factors = s.at("factors").get<std::size_t>();
        if (s.contains("noise_scale")) spec.noise_scale = s.at("noise_scale").get<double>();
        c.synthetic = spec;
    }
    if (c.dataset_path.empty() == !c.synthetic.has_value())
        throw Error("config needs exactly one of \"dataset\" or \"synthetic\"");

    if (j.contains("lookback")) c.lookback = j.at("lookback").get<std::size_t>();
    if (j.contains("ridge")) c.ridge = j.at("ridge").get<double>();
    if (j.contains("train_len")) c.split.train_len = j.at("train_len").get<std::size_t>();
    if (j.contains("valid_len")) c.split.valid_len = j.at("valid_len").get<std::size_t>();
    if (j.contains("test_len")) c.split.test_len = j.at("test_len").get<std::size_t>();
    if (j.contains("alpha_grid")) c.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
    if (j.contains("lambda_grid"))
        c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::size_t>();
    if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("max_iterations"))
        c.max_iterations = j.at("max_iterations").get<std::size_t>();
    if (j.contains("patience")) c.patience = j.at("patience").get<std::size_t>();
    if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("mse_scale")) c.mse_scale = j.at("mse_scale").get<double>();
    if (j.contains("ndq_random")) c.ndq_random = j.at("ndq_random").get<std::size_t>();
    if (j.contains("ndq_seed")) c.ndq_seed = j.at("ndq_seed").get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();

    if (c.alpha_grid.empty() || c.lambda_grid.empty()) throw Error("grids must be non-empty");
    if (c.seeds < 1) throw Error("seeds must be at least 1");
    for (double a : c.alpha_grid)
        if (a < 0.0 || a > 1.0) throw Error("alpha grid values must lie in [0, 1]");
    for (double l : c.lambda_grid)
        if (!(l > 0.0)) throw Error("lambda grid values must be positive");
    return c;
}

namespace {

json config_to_json(const ExperimentConfig& c) {
    json j{{"version", 1},
           {"lookback", c.lookback},
           {"ridge", c.ridge},
           {"train_len", c.split.train_len},
           {"valid_len", c.split.valid_len},
           {"test_len", c.split.test_len},
           {"alpha_grid", c.alpha_grid},
           {"lambda_grid", c.lambda_grid},
           {"seeds", c.seeds},
           {"base_seed", c.base_seed},
           {"max_iterations", c.max_iterations},
           {"patience", c.patience},
           {"learning_rate", c.learning_rate},
           {"batch_size", c.batch_size},
           {"mse_scale", c.mse_scale},
           {"ndq_random", c.ndq_random},
           {"ndq_seed", c.ndq_seed},
           {"output_dir", c.output_dir}};
    if (!c.dataset_path.empty()) j["dataset"] = c.dataset_path;
    if (c.synthetic) {
        j["synthetic"] = json{{"seed", c.synthetic->seed},
                              {"assets", c.synthetic->assets},
                              {"days", c.synthetic->days},
                              {"factors", c.synthetic->factors},
                              {"noise_scale", c.synthetic->noise_scale}};
    }
    return j;
}

void write_train_log(const std::string& path, const TrainRecord& record) {
    std::ostringstream out;
    out << "iteration,train_loss,valid_loss,degenerate_jacobians\n";
    for (const EvalRecord& e : record.history)
        out << e.iteration << ',' << fmt17(e.train_loss) << ',' << fmt17(e.valid_loss) << ','
            << e.degenerate_jacobians << '\n';
    write_text_file(path, out.str());
}

void write_backtest_csv(const std::string& path, const BacktestResult& bt) {
    std::ostringstream out;
    const Eigen::Index n = bt.days.empty() ? 0 : bt.days.front().mu_hat.size();
    out << "date";
    for (Eigen::Index i = 0; i < n; ++i) out << ",mu_hat_" << i;
    for (Eigen::Index i = 0; i < n; ++i) out << ",w_" << i;
    out << ",realized_return,dq,dq_optimal,regret,ndq,cosine"
           ",corr_sinv_mu,corr_mse_mu,corr_sinv_w,corr_mu_mu\n";
    for (const DayRecord& d : bt.days) {
        out << format_iso_date(d.date);
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt6(d.mu_hat(i));
        for (Eigen::Index i = 0; i < n; ++i) out << ',' << fmt6(d.weights(i));
        out << ',' << fmt6(d.realized_return) << ',' << fmt6(d.dq) << ','
            << fmt6(d.dq_optimal) << ',' << fmt6(d.regret) << ',' << fmt6(d.ndq) << ','
            << fmt6(d.cosine) << ',' << fmt6(d.corr_sinv_mu) << ',' << fmt6(d.corr_mse_mu)
            << ',' << fmt6(d.corr_sinv_w) << ',' << fmt6(d.corr_mu_mu) << '\n';
    }
    write_text_file(path, out.str());
}

}  // namespace

RunMetrics run_single(const ExperimentConfig& config, const SampleSplits& splits,
                      double alpha, double lambda, std::size_t alpha_index,
                      std::size_t lambda_index, std::size_t repetition,
                      const std::string& run_dir) {
    fs::create_directories(run_dir);
    const std::uint64_t seed =
        cell_seed(config.base_seed, alpha_index, lambda_index, repetition);

    const LossConfig loss{alpha, lambda, config.mse_scale};
    TrainConfig tc;
    tc.max_iterations = config.max_iterations;
    tc.patience = config.patience;
    tc.learning_rate = config.learning_rate;
    tc.batch_size = config.batch_size;
    tc.seed = derive_seed(seed, 0xb47c);

    const TrainResult trained = train(splits.train, splits.valid, seed, loss, tc);
    save_model(trained.model, run_dir + "/model.bin");
    write_train_log(run_dir + "/train_log.csv", trained.record);

    NdqConfig ndq;
    ndq.n_random = config.ndq_random;
    ndq.seed = config.ndq_seed;
    ndq.baseline_sigma = cross_sectional_sigma(splits.train);
    const BacktestResult bt = run_backtest(trained.model, splits.test, lambda, ndq);
    write_backtest_csv(run_dir + "/backtest.csv", bt);

    RunMetrics m;
    m.alpha = alpha;
    m.lambda = lambda;
    m.seed_index = repetition;
    m.run_seed = seed;
    m.sharpe = bt.sharpe;
    m.cumulative = bt.cumulative;
    m.cosine = bt.mean_cosine;
    m.ndq = bt.mean_ndq;

    double regret_sum = 0, mse_sum = 0;
    std::vector<double> c1, c2, c3, c4;
    for (std::size_t t = 0; t < bt.days.size(); ++t) {
        regret_sum += bt.days[t].regret;
        mse_sum += mse_loss(bt.days[t].mu_hat, splits.test[t].target_mu, config.mse_scale);
        c1.push_back(bt.days[t].corr_sinv_mu);
        c2.push_back(bt.days[t].corr_mse_mu);
        c3.push_back(bt.days[t].corr_sinv_w);
        c4.push_back(bt.days[t].corr_mu_mu);
    }
    m.mvo_loss = regret_sum / static_cast<double>(bt.days.size());
    m.mse_loss = mse_sum / static_cast<double>(bt.days.size());
    m.corr_sinv_mu = day_moments(c1);
    m.corr_mse_mu = day_moments(c2);
    m.corr_sinv_w = day_moments(c3);
    m.corr_mu_mu = day_moments(c4);
    m.degenerate_jacobians = trained.record.degenerate_jacobians;
    m.stopping_iteration = trained.record.stopping_iteration;
    m.best_valid_loss = trained.record.best_valid_loss;

    write_text_file(run_dir + "/metrics.json", metrics_to_json(m).dump(2) + "\n");
    return m;
}

int cmd_prepare(const PrepareArgs& args, std::ostream& out, std::ostream& err) {
    try {
        if (args.output_dir.empty()) {
            err << "prepare: --output-dir is required\n";
            return 1;
        }
        if (args.synthetic == !args.input_path.empty()) {
            err << "prepare: need exactly one of --synthetic or --input\n";
            return 1;
        }
        CsvFormat format;
        if (args.format == "ff_percent")
            format = CsvFormat::ff_percent;
        else if (args.format == "plain_decimal")
            format = CsvFormat::plain_decimal;
        else {
            err << "prepare: unknown format '" << args.format << "'\n";
            return 1;
        }

        fs::create_directories(args.output_dir);
        const std::string dataset_path = args.output_dir + "/dataset.csv";

        ReturnPanel panel = args.synthetic
                                ? generate_synthetic(args.synthetic_spec.seed,
                                                     args.synthetic_spec.assets,
                                                     args.synthetic_spec.days,
                                                     args.synthetic_spec.factors,
                                                     args.synthetic_spec.noise_scale)
                                : parse_returns_csv_file(args.input_path, format);
        write_returns_csv_file(dataset_path, panel);

        json manifest{{"version", 1},
                      {"source", args.synthetic ? std::string("synthetic") : args.input_path},
                      {"assets", panel.assets},
                      {"first_date", format_iso_date(panel.dates.front())},
                      {"last_date", format_iso_date(panel.dates.back())},
                      {"rows", panel.days()},
                      {"checksum", file_checksum(dataset_path)}};
        if (args.synthetic) {
            manifest["synthetic"] = json{{"seed", args.synthetic_spec.seed},
                                         {"assets", args.synthetic_spec.assets},
                                         {"days", args.synthetic_spec.days},
                                         {"factors", args.synthetic_spec.factors},
                                         {"noise_scale", args.synthetic_spec.noise_scale}};
        }
        write_text_file(args.output_dir + "/manifest.json", manifest.dump(2) + "\n");
        out << "wrote " << dataset_path << " (" << panel.days() << " days, "
            << panel.size() << " assets)\n";
        return 0;
    } catch (const Error& e) {
        err << "prepare: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "prepare: " << e.what() << "\n";
        return 2;
    }
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
    if (args.alpha < 0.0 || args.alpha > 1.0) {
        err << "train: --alpha must lie in [0, 1]\n";
        return 1;
    }
    if (!(args.lambda > 0.0)) {
        err << "train: --lambda must be positive\n";
        return 1;
    }
    if (args.dataset_path.empty() || args.output_dir.empty()) {
        err << "train: --data and --output-dir are required\n";
        return 1;
    }
    try {
        const ReturnPanel panel =
            parse_returns_csv_file(args.dataset_path, CsvFormat::plain_decimal);
        const auto samples = make_samples(panel, args.lookback, args.ridge);
        const SampleSplits splits = split_samples(samples, args.split);

        const LossConfig loss{args.alpha, args.lambda, args.mse_scale};
        TrainConfig tc;
        tc.max_iterations = args.max_iterations;
        tc.patience = args.patience;
        tc.learning_rate = args.learning_rate;
        tc.batch_size = args.batch_size;
        tc.seed = derive_seed(args.seed, 0xb47c);

        fs::create_directories(args.output_dir);
        const TrainResult trained = train(splits.train, splits.valid, args.seed, loss, tc);
        save_model(trained.model, args.output_dir + "/model.bin");
        write_train_log(args.output_dir + "/train_log.csv", trained.record);
        out << "stopped at iteration " << trained.record.stopping_iteration
            << ", best validation loss " << fmt6(trained.record.best_valid_loss) << "\n";
        return 0;
    } catch (const Error& e) {
        err << "train: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "train: " << e.what() << "\n";
        return 2;
    }
}

namespace {

void write_grid_tables(const ExperimentConfig& config,
                       const std::vector<CellOutcome>& cells, const std::string& checksum) {
    const std::string& dir = config.output_dir;

    std::ostringstream t1, t2, t3, f2, f3;
    t1 << "alpha,lambda,ndq_mean,ndq_std,mvo_loss_mean,mvo_loss_std,mse_loss_mean,"
          "mse_loss_std\n";
    t2 << "alpha,lambda,cosine_mean,cosine_std\n";
    t3 << "alpha,lambda,corr_sinv_mu_mean,corr_sinv_mu_std,corr_mse_mu_mean,"
          "corr_mse_mu_std,corr_sinv_w_mean,corr_sinv_w_std,corr_mu_mu_mean,"
          "corr_mu_mu_std\n";
    f2 << "alpha,lambda,seed,sharpe,cumulative_return\n";
    f3 << "alpha,lambda,seed,corr_mu_mu\n";

    json summary{{"version", 1},
                 {"config", config_to_json(config)},
                 {"dataset_checksum", checksum}};
    json jcells = json::array();
    std::size_t failures = 0;

    for (const CellOutcome& cell : cells) {
        const double alpha = config.alpha_grid[cell.alpha_index];
        const double lambda = config.lambda_grid[cell.lambda_index];
        json jc{{"alpha", alpha},
                {"lambda", lambda},
                {"alpha_index", cell.alpha_index},
                {"lambda_index", cell.lambda_index},
                {"status", cell.ok ? "ok" : "failed"}};
        if (!cell.ok) {
            jc["error"] = cell.error;
            ++failures;
            jcells.push_back(std::move(jc));
            continue;
        }

        std::vector<double> ndq, mvo, mse, cosine, sharpe, cumret;
        RunMetrics::Moments p1, p2, p3, p4;
        json jruns = json::array();
        for (const RunMetrics& r : cell.runs) {
            ndq.push_back(r.ndq);
            mvo.push_back(r.mvo_loss);
            mse.push_back(r.mse_loss);
            cosine.push_back(r.cosine);
            sharpe.push_back(r.sharpe);
            cumret.push_back(r.cumulative);
            p1 = pool_moments(p1, r.corr_sinv_mu);
            p2 = pool_moments(p2, r.corr_mse_mu);
            p3 = pool_moments(p3, r.corr_sinv_w);
            p4 = pool_moments(p4, r.corr_mu_mu);
            jruns.push_back(metrics_to_json(r));
            f2 << fmt6(alpha) << ',' << fmt6(lambda) << ',' << r.seed_index << ','
               << fmt6(r.sharpe) << ',' << fmt6(r.cumulative) << '\n';
            f3 << fmt6(alpha) << ',' << fmt6(lambda) << ',' << r.seed_index << ','
               << fmt6(r.corr_mu_mu.mean) << '\n';
        }
        const MeanStd ndq_s = mean_std(ndq), mvo_s = mean_std(mvo), mse_s = mean_std(mse);
        const MeanStd cos_s = mean_std(cosine), sh_s = mean_std(sharpe),
                      cum_s = mean_std(cumret);

        t1 << fmt6(alpha) << ',' << fmt6(lambda) << ',' << fmt6(ndq_s.mean) << ','
           << fmt6(ndq_s.stddev) << ',' << fmt6(mvo_s.mean) << ',' << fmt6(mvo_s.stddev)
           << ',' << fmt6(mse_s.mean) << ',' << fmt6(mse_s.stddev) << '\n';
        t2 << fmt6(alpha) << ',' << fmt6(lambda) << ',' << fmt6(cos_s.mean) << ','
           << fmt6(cos_s.stddev) << '\n';
        t3 << fmt6(alpha) << ',' << fmt6(lambda) << ',' << fmt6(p1.mean) << ','
           << fmt6(moments_std(p1)) << ',' << fmt6(p2.mean) << ',' << fmt6(moments_std(p2))
           << ',' << fmt6(p3.mean) << ',' << fmt6(moments_std(p3)) << ',' << fmt6(p4.mean)
           << ',' << fmt6(moments_std(p4)) << '\n';

        jc["runs"] = std::move(jruns);
        jc["aggregates"] =
            json{{"ndq", {{"mean", ndq_s.mean}, {"std", ndq_s.stddev}}},
                 {"mvo_loss", {{"mean", mvo_s.mean}, {"std", mvo_s.stddev}}},
                 {"mse_loss", {{"mean", mse_s.mean}, {"std", mse_s.stddev}}},
                 {"cosine", {{"mean", cos_s.mean}, {"std", cos_s.stddev}}},
                 {"sharpe", {{"mean", sh_s.mean}, {"std", sh_s.stddev}}},
                 {"cumulative_return", {{"mean", cum_s.mean}, {"std", cum_s.stddev}}},
                 {"corr_sinv_mu",
                  {{"mean", p1.mean}, {"std", moments_std(p1)}, {"n", p1.n}}},
                 {"corr_mse_mu",
                  {{"mean", p2.mean}, {"std", moments_std(p2)}, {"n", p2.n}}},
                 {"corr_sinv_w",
                  {{"mean", p3.mean}, {"std", moments_std(p3)}, {"n", p3.n}}},
                 {"corr_mu_mu",
                  {{"mean", p4.mean}, {"std", moments_std(p4)}, {"n", p4.n}}}};
        jcells.push_back(std::move(jc));
    }

    summary["cells"] = std::move(jcells);
    summary["failed_cells"] = failures;

    write_text_file(dir + "/table1.csv", t1.str());
    write_text_file(dir + "/table2.csv", t2.str());
    write_text_file(dir + "/table3.csv", t3.str());
    write_text_file(dir + "/figure2_data.csv", f2.str());
    write_text_file(dir + "/figure3_data.csv", f3.str());
    write_text_file(dir + "/summary.json", summary.dump(2) + "\n");
}

}  // namespace

int cmd_grid(const GridArgs& args, std::ostream& out, std::ostream& err) {
    ExperimentConfig config;
    SampleSplits splits;
    std::string checksum;
    try {
        config = load_experiment_config(args.config_path);
        if (!args.output_dir_override.empty()) config.output_dir = args.output_dir_override;
        if (config.output_dir.empty()) {
            err << "grid: no output directory (config output_dir or --output-dir)\n";
            return 1;
        }
        fs::create_directories(config.output_dir);

        ReturnPanel panel = [&] {
            if (config.synthetic) {
                ReturnPanel p = generate_synthetic(
                    config.synthetic->seed, config.synthetic->assets, config.synthetic->days,
                    config.synthetic->factors, config.synthetic->noise_scale);
                write_returns_csv_file(config.output_dir + "/dataset.csv", p);
                return p;
            }
            return parse_returns_csv_file(config.dataset_path, CsvFormat::plain_decimal);
        }();
        checksum = config.synthetic ? file_checksum(config.output_dir + "/dataset.csv")
                                    : file_checksum(config.dataset_path);

        const auto samples = make_samples(panel, config.lookback, config.ridge);
        splits = split_samples(samples, config.split);
    } catch (const Error& e) {
        err << "grid: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        err << "grid: " << e.what() << "\n";
        return 2;
    }

    struct Task {
        std::size_t alpha_index;
        std::size_t lambda_index;
    };
    std::vector<Task> tasks;
    for (std::size_t ai = 0; ai < config.alpha_grid.size(); ++ai)
        for (std::size_t li = 0; li < config.lambda_grid.size(); ++li)
            tasks.push_back({ai, li});

    std::vector<CellOutcome> outcomes(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;

    auto run_cell = [&](std::size_t task_index) {
        const Task& task = tasks[task_index];
        CellOutcome& outcome = outcomes[task_index];
        outcome.alpha_index = task.alpha_index;
        outcome.lambda_index = task.lambda_index;
        const double alpha = config.alpha_grid[task.alpha_index];
        const double lambda = config.lambda_grid[task.lambda_index];
        const std::string cell_dir = config.output_dir + "/cells/" +
                                     cell_dir_name(task.alpha_index, task.lambda_index);
        const std::string marker = cell_dir + "/done";
        try {
            if (fs::exists(marker)) {
                // completed earlier; reload its metrics for aggregation
                for (std::size_t k = 0; k < config.seeds; ++k) {
                    const std::string metrics_path =
                        cell_dir + "/seed" + std::to_string(k) + "/metrics.json";
                    outcome.runs.push_back(metrics_from_json(read_json_file(metrics_path)));
                }
                outcome.ok = true;
                std::lock_guard<std::mutex> lock(log_mutex);
                out << "cell alpha=" << fmt6(alpha) << " lambda=" << fmt6(lambda)
                    << ": already done, skipped\n";
                return;
            }
            for (std::size_t k = 0; k < config.seeds; ++k) {
                const std::string run_dir = cell_dir + "/seed" + std::to_string(k);
                outcome.runs.push_back(run_single(config, splits, alpha, lambda,
                                                  task.alpha_index, task.lambda_index, k,
                                                  run_dir));
            }
            write_text_file(marker, "done\n");
            outcome.ok = true;
            std::lock_guard<std::mutex> lock(log_mutex);
            out << "cell alpha=" << fmt6(alpha) << " lambda=" << fmt6(lambda) << ": ok\n";
        } catch (const std::exception& e) {
            outcome.ok = false;
            outcome.error = e.what();
            std::lock_guard<std::mutex> lock(log_mutex);
            out << "cell alpha=" << fmt6(alpha) << " lambda=" << fmt6(lambda)
                << ": FAILED (" << e.what() << ")\n";
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, args.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run_cell(i);
    } else {
        std::vector<std::thread> workers;
        const std::size_t n_workers = std::min(jobs, tasks.size());
        for (std::size_t w = 0; w < n_workers; ++w) {
            workers.emplace_back([&] {
                for (;;) {
                    const std::size_t i = next.fetch_add(1);
                    if (i >= tasks.size()) break;
                    run_cell(i);
                }
            });
        }
        for (auto& t : workers) t.join();
    }

    try {
        write_grid_tables(config, outcomes, checksum);
    } catch (const std::exception& e) {
        err << "grid: aggregation failed: " << e.what() << "\n";
        return 2;
    }

    std::size_t failures = 0;
    for (const CellOutcome& o : outcomes)
        if (!o.ok) ++failures;
    if (failures > 0) {
        err << "grid: " << failures << " cell(s) failed\n";
        return 4;
    }
    out << "grid complete: " << outcomes.size() << " cells x " << config.seeds
        << " seeds\n";
    return 0;
}

namespace {

std::string cell_value(const json& cell, const char* metric, const char* field) {
    return fmt("%.3f", cell.at("aggregates").at(metric).at(field).get<double>());
}

std::string mean_pm_std(const json& cell, const char* metric, const char* format) {
    const json& m = cell.at("aggregates").at(metric);
    return fmt(format, m.at("mean").get<double>()) + " (±" +
           fmt(format, m.at("std").get<double>()) + ")";
}

const json* find_cell(const json& cells, double alpha, double lambda) {
    for (const json& c : cells) {
        if (c.at("alpha").get<double>() == alpha && c.at("lambda").get<double>() == lambda &&
            c.at("status").get<std::string>() == "ok")
            return &c;
    }
    return nullptr;
}

}  // namespace

int cmd_report(const ReportArgs& args, std::ostream& out, std::ostream& err) {
    const std::string dir = args.run_dir;
    for (const char* name : {"table1.csv", "table2.csv", "table3.csv", "figure2_data.csv",
                             "figure3_data.csv", "summary.json"}) {
        if (!fs::exists(dir + "/" + name)) {
            err << "report: missing " << name << " in '" << dir << "'\n";
            return 2;
        }
    }
    json summary;
    try {
        summary = read_json_file(dir + "/summary.json");
    } catch (const std::exception& e) {
        err << "report: " << e.what() << "\n";
        return 2;
    }
    if (summary.value("failed_cells", std::size_t{1}) > 0) {
        err << "report: grid has failed cells; outputs are partial\n";
        return 2;
    }

    const json& cells = summary.at("cells");
    const std::vector<double> alphas =
        summary.at("config").at("alpha_grid").get<std::vector<double>>();
    const std::vector<double> lambdas =
        summary.at("config").at("lambda_grid").get<std::vector<double>>();

    out << "Grid report (" << dir << ")\n";
    out << "dataset checksum: " << summary.at("dataset_checksum").get<std::string>()
        << "\n\n";

    for (double lambda : lambdas) {
        out << "Table 1 | lambda = " << fmt6(lambda)
            << "  (NDQ / MVO loss / MSE loss, mean (±std) over seeds)\n";
        char line[256];
        std::snprintf(line, sizeof(line), "  %-8s %-20s %-24s %-24s\n", "alpha", "NDQ",
                      "MVO loss", "MSE loss");
        out << line;
        for (double alpha : alphas) {
            const json* cell = find_cell(cells, alpha, lambda);
            if (!cell) continue;
            std::snprintf(line, sizeof(line), "  %-8s %-20s %-24s %-24s\n",
                          fmt("%.2f", alpha).c_str(),
                          mean_pm_std(*cell, "ndq", "%.3f").c_str(),
                          mean_pm_std(*cell, "mvo_loss", "%.5f").c_str(),
                          mean_pm_std(*cell, "mse_loss", "%.5f").c_str());
            out << line;
        }
        out << "\n";
    }

    out << "Table 2 | cosine similarity of optimal and model portfolios\n";
    {
        char line[256];
        std::string header = "  lambda  ";
        for (double alpha : alphas) {
            std::snprintf(line, sizeof(line), "%-20s", ("alpha=" + fmt("%.2f", alpha)).c_str());
            header += line;
        }
        out << header << "\n";
        for (double lambda : lambdas) {
            std::snprintf(line, sizeof(line), "  %-8s", fmt6(lambda).c_str());
            out << line;
            for (double alpha : alphas) {
                const json* cell = find_cell(cells, alpha, lambda);
                std::snprintf(line, sizeof(line), "%-20s",
                              cell ? mean_pm_std(*cell, "cosine", "%.3f").c_str() : "-");
                out << line;
            }
            out << "\n";
        }
        out << "\n";
    }

    out << "Table 3 | cross-sectional correlations, alpha endpoints\n";
    {
        const double a_lo = alphas.front(), a_hi = alphas.back();
        char line[256];
        std::snprintf(line, sizeof(line), "  %-8s %-26s %-26s %-26s\n", "lambda",
                      "Sigma^-1 & mu_hat", "MSE & mu_hat", "Sigma^-1 & w(mu_hat)");
        out << line;
        for (double lambda : lambdas) {
            const json* lo = find_cell(cells, a_lo, lambda);
            const json* hi = find_cell(cells, a_hi, lambda);
            if (!lo || !hi) continue;
            auto pair_str = [&](const char* metric) {
                return cell_value(*lo, metric, "mean") + " -> " +
                       cell_value(*hi, metric, "mean");
            };
            std::snprintf(line, sizeof(line), "  %-8s %-26s %-26s %-26s\n",
                          fmt6(lambda).c_str(), pair_str("corr_sinv_mu").c_str(),
                          pair_str("corr_mse_mu").c_str(), pair_str("corr_sinv_w").c_str());
            out << line;
        }
        out << "  (alpha=" << fmt("%.2f", a_lo) << " -> alpha=" << fmt("%.2f", a_hi)
            << ", pooled over test days and seeds)\n\n";
    }

    // Trend verdicts: compare the alpha-grid endpoints per lambda.
    const double a_lo = alphas.front(), a_hi = alphas.back();
    for (double lambda : lambdas) {
        const json* lo = find_cell(cells, a_lo, lambda);
        const json* hi = find_cell(cells, a_hi, lambda);
        if (!lo || !hi) continue;
        auto agg = [](const json& c, const char* m) {
            return c.at("aggregates").at(m).at("mean").get<double>();
        };
        out << "NDQ trend: " << (agg(*hi, "ndq") > agg(*lo, "ndq") ? "PASS" : "FAIL")
            << " (lambda=" << fmt6(lambda) << ")\n";
        out << "MVO-loss decrease: "
            << (agg(*hi, "mvo_loss") < agg(*lo, "mvo_loss") ? "PASS" : "FAIL")
            << " (lambda=" << fmt6(lambda) << ")\n";
        out << "Cosine-similarity increase: "
            << (agg(*hi, "cosine") > agg(*lo, "cosine") ? "PASS" : "FAIL")
            << " (lambda=" << fmt6(lambda) << ")\n";
    }
    return 0;
}

}  // namespace dfl
