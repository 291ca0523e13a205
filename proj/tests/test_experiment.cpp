#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dfl/errors.hpp"
#include "dfl/experiment.hpp"

using namespace dfl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("dfl_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

// config sized to finish in seconds
json tiny_grid_config(const std::string& out_dir) {
    return json{{"version", 1},
                {"synthetic",
                 {{"seed", 7}, {"assets", 4}, {"days", 110}, {"factors", 2},
                  {"noise_scale", 0.5}}},
                {"lookback", 30},
                {"ridge", 1e-8},
                {"train_len", 40},
                {"valid_len", 20},
                {"test_len", 20},
                {"alpha_grid", {0.0, 1.0}},
                {"lambda_grid", {3.0}},
                {"seeds", 2},
                {"base_seed", 1},
                {"max_iterations", 12},
                {"patience", 50},
                {"learning_rate", 1e-3},
                {"batch_size", 16},
                {"mse_scale", 10.0},
                {"ndq_random", 25},
                {"ndq_seed", 91},
                {"output_dir", out_dir}};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(DFLMVO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("config loading and validation") {
    TempDir tmp("config");
    const std::string path = tmp.str() + "/config.json";

    write_file(path, tiny_grid_config("out").dump());
    const ExperimentConfig c = load_experiment_config(path);
    CHECK(c.synthetic.has_value());
    CHECK(c.alpha_grid == std::vector<double>{0.0, 1.0});
    CHECK(c.split.train_len == 40);

    json bad = tiny_grid_config("out");
    bad.erase("version");
    write_file(path, bad.dump());
    CHECK_THROWS_AS(load_experiment_config(path), Error);

    bad = tiny_grid_config("out");
    bad["dataset"] = "also_a_file.csv";  // both sources at once
    write_file(path, bad.dump());
    CHECK_THROWS_AS(load_experiment_config(path), Error);

    bad = tiny_grid_config("out");
    bad["alpha_grid"] = {0.0, 1.5};
    write_file(path, bad.dump());
    CHECK_THROWS_AS(load_experiment_config(path), Error);
}

TEST_CASE("cell seeds are stable under grid growth") {
    const auto s = cell_seed(1, 2, 3, 4);
    CHECK(s == cell_seed(1, 2, 3, 4));
    CHECK(s != cell_seed(1, 2, 3, 5));
    CHECK(s != cell_seed(1, 3, 2, 4));
    CHECK(s != cell_seed(2, 2, 3, 4));
}

TEST_CASE("file checksum tracks content") {
    TempDir tmp("checksum");
    const std::string a = tmp.str() + "/a.txt";
    write_file(a, "hello");
    const std::string c1 = file_checksum(a);
    CHECK(c1.substr(0, 8) == "fnv1a64:");
    write_file(a, "hello");
    CHECK(file_checksum(a) == c1);
    write_file(a, "hello!");
    CHECK(file_checksum(a) != c1);
}

TEST_CASE("prepare writes a deterministic dataset and manifest") {
    TempDir tmp("prepare");
    PrepareArgs args;
    args.synthetic = true;
    args.synthetic_spec = {11, 4, 60, 2, 0.5};
    args.output_dir = tmp.str() + "/d1";
    std::ostringstream out, err;
    REQUIRE(cmd_prepare(args, out, err) == 0);

    args.output_dir = tmp.str() + "/d2";
    REQUIRE(cmd_prepare(args, out, err) == 0);
    CHECK(slurp(tmp.str() + "/d1/dataset.csv") == slurp(tmp.str() + "/d2/dataset.csv"));

    const json manifest = json::parse(slurp(tmp.str() + "/d1/manifest.json"));
    CHECK(manifest.at("rows").get<int>() == 60);
    CHECK(manifest.at("checksum").get<std::string>() ==
          file_checksum(tmp.str() + "/d1/dataset.csv"));
}

TEST_CASE("prepare surfaces missing-value cells with exit 2") {
    TempDir tmp("prepare_err");
    const std::string input = tmp.str() + "/bad.csv";
    write_file(input,
               ",A,B\n"
               "20190102, 1.00, -99.99\n");
    PrepareArgs args;
    args.input_path = input;
    args.format = "ff_percent";
    args.output_dir = tmp.str() + "/out";
    std::ostringstream out, err;
    CHECK(cmd_prepare(args, out, err) == 2);
    CHECK(err.str().find("row 1") != std::string::npos);
}

TEST_CASE("single-cell training is deterministic on disk") {
    TempDir tmp("train");
    PrepareArgs prep;
    prep.synthetic = true;
    prep.synthetic_spec = {13, 4, 110, 2, 0.5};
    prep.output_dir = tmp.str() + "/data";
    std::ostringstream out, err;
    REQUIRE(cmd_prepare(prep, out, err) == 0);

    TrainArgs targs;
    targs.dataset_path = tmp.str() + "/data/dataset.csv";
    targs.alpha = 0.0;
    targs.lambda = 3.0;
    targs.seed = 1;
    targs.split = {40, 20, 20};
    targs.max_iterations = 10;
    targs.patience = 50;
    targs.batch_size = 16;

    targs.output_dir = tmp.str() + "/run1";
    REQUIRE(cmd_train(targs, out, err) == 0);
    targs.output_dir = tmp.str() + "/run2";
    REQUIRE(cmd_train(targs, out, err) == 0);
    CHECK(slurp(tmp.str() + "/run1/model.bin") == slurp(tmp.str() + "/run2/model.bin"));
    CHECK(slurp(tmp.str() + "/run1/train_log.csv") ==
          slurp(tmp.str() + "/run2/train_log.csv"));

    // one log record per validation evaluation: header + >= 1 rows
    std::istringstream log(slurp(tmp.str() + "/run1/train_log.csv"));
    std::string line;
    std::getline(log, line);
    CHECK(line == "iteration,train_loss,valid_loss,degenerate_jacobians");
    int rows = 0;
    while (std::getline(log, line))
        if (!line.empty()) ++rows;
    CHECK(rows >= 1);
}

TEST_CASE("train rejects out-of-range alpha with exit 1") {
    TrainArgs targs;
    targs.dataset_path = "unused.csv";
    targs.output_dir = "unused";
    targs.alpha = 1.5;
    std::ostringstream out, err;
    CHECK(cmd_train(targs, out, err) == 1);
}

TEST_CASE("grid runs, resumes, and aggregates consistently") {
    TempDir tmp("grid");
    const std::string out_dir = tmp.str() + "/run";
    const std::string config_path = tmp.str() + "/config.json";
    write_file(config_path, tiny_grid_config(out_dir).dump(2));

    GridArgs gargs;
    gargs.config_path = config_path;
    gargs.jobs = 2;
    std::ostringstream out, err;
    REQUIRE(cmd_grid(gargs, out, err) == 0);

    for (const char* name : {"table1.csv", "table2.csv", "table3.csv", "figure2_data.csv",
                             "figure3_data.csv", "summary.json", "dataset.csv"})
        CHECK(fs::exists(out_dir + "/" + name));

    // 2 cells x 2 seeds
    std::istringstream t1(slurp(out_dir + "/table1.csv"));
    std::string line;
    int rows = -1;  // discount header
    while (std::getline(t1, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 2);

    const json summary = json::parse(slurp(out_dir + "/summary.json"));
    CHECK(summary.at("failed_cells").get<int>() == 0);
    REQUIRE(summary.at("cells").size() == 2);
    for (const json& cell : summary.at("cells")) {
        REQUIRE(cell.at("runs").size() == 2);
        double ndq_sum = 0;
        for (const json& run : cell.at("runs")) ndq_sum += run.at("ndq").get<double>();
        CHECK(cell.at("aggregates").at("ndq").at("mean").get<double>() ==
              doctest::Approx(ndq_sum / 2.0).epsilon(1e-12));
    }

    // resumability: plant a canary in cell a0_l0, delete a1_l0's marker, rerun
    const std::string canary_path = out_dir + "/cells/a0_l0/seed0/model.bin";
    write_file(canary_path, "CANARY");
    fs::remove(out_dir + "/cells/a1_l0/done");
    const std::string a1_metrics_before = slurp(out_dir + "/cells/a1_l0/seed0/metrics.json");

    std::ostringstream out2, err2;
    REQUIRE(cmd_grid(gargs, out2, err2) == 0);
    CHECK(slurp(canary_path) == "CANARY");  // completed cell untouched
    CHECK(slurp(out_dir + "/cells/a1_l0/seed0/metrics.json") == a1_metrics_before);
    CHECK(out2.str().find("skipped") != std::string::npos);
}

TEST_CASE("grid reports failing cells with exit 4") {
    TempDir tmp("gridfail");
    const std::string out_dir = tmp.str() + "/run";
    json config = tiny_grid_config(out_dir);
    config["ndq_random"] = 0;  // every backtest rejects this
    const std::string config_path = tmp.str() + "/config.json";
    write_file(config_path, config.dump());

    GridArgs gargs;
    gargs.config_path = config_path;
    gargs.jobs = 1;
    std::ostringstream out, err;
    CHECK(cmd_grid(gargs, out, err) == 4);

    const json summary = json::parse(slurp(out_dir + "/summary.json"));
    CHECK(summary.at("failed_cells").get<int>() == 2);  // both cells attempted
    for (const json& cell : summary.at("cells"))
        CHECK(cell.at("status").get<std::string>() == "failed");
}

TEST_CASE("report is a pure function of the run directory") {
    TempDir tmp("report");
    const std::string out_dir = tmp.str() + "/run";
    const std::string config_path = tmp.str() + "/config.json";
    write_file(config_path, tiny_grid_config(out_dir).dump());
    GridArgs gargs;
    gargs.config_path = config_path;
    gargs.jobs = 2;
    std::ostringstream gout, gerr;
    REQUIRE(cmd_grid(gargs, gout, gerr) == 0);

    ReportArgs rargs;
    rargs.run_dir = out_dir;
    std::ostringstream r1, r2, rerr;
    REQUIRE(cmd_report(rargs, r1, rerr) == 0);
    REQUIRE(cmd_report(rargs, r2, rerr) == 0);
    CHECK(r1.str() == r2.str());
    CHECK(r1.str().find("NDQ trend:") != std::string::npos);
    CHECK(r1.str().find("lambda=3") != std::string::npos);

    // deleting an output is reported with exit 2 naming the file
    fs::remove(out_dir + "/table2.csv");
    std::ostringstream r3, rerr3;
    CHECK(cmd_report(rargs, r3, rerr3) == 2);
    CHECK(rerr3.str().find("table2.csv") != std::string::npos);
}

TEST_CASE("CLI exit codes") {
    TempDir tmp("cli");
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("definitely-not-a-subcommand") == 1);
    CHECK(run_cli("train --alpha 1.5 --data x.csv --output-dir " + tmp.str() + "/o") == 1);
    CHECK(run_cli("prepare --synthetic --seed 3 --assets 4 --days 40 --output-dir " +
                  tmp.str() + "/p") == 0);
    CHECK(fs::exists(tmp.str() + "/p/dataset.csv"));
    CHECK(run_cli("prepare --input /nonexistent.csv --format ff_percent --output-dir " +
                  tmp.str() + "/q") == 2);
    CHECK(run_cli("report --run-dir " + tmp.str() + "/empty") == 2);
}
