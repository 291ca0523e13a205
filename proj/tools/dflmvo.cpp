#include <CLI11.hpp>
#include <iostream>

#include "dfl/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Decision-focused learning for mean-variance portfolio optimization"};
    app.require_subcommand(1);

    app.fallthrough();  // global flags may follow the subcommand

    std::string output_dir;
    app.add_option("--output-dir", output_dir, "Directory for generated files");

    dfl::PrepareArgs prepare;
    auto* cmd_prepare = app.add_subcommand("prepare", "Parse or generate a returns dataset");
    cmd_prepare->fallthrough();
    cmd_prepare->add_flag("--synthetic", prepare.synthetic, "Generate synthetic returns");
    cmd_prepare->add_option("--seed", prepare.synthetic_spec.seed, "Synthetic generator seed");
    cmd_prepare->add_option("--assets", prepare.synthetic_spec.assets, "Synthetic asset count");
    cmd_prepare->add_option("--days", prepare.synthetic_spec.days, "Synthetic day count");
    cmd_prepare->add_option("--factors", prepare.synthetic_spec.factors,
                            "Synthetic factor count");
    cmd_prepare->add_option("--noise", prepare.synthetic_spec.noise_scale,
                            "Idiosyncratic noise scale");
    cmd_prepare->add_option("--input", prepare.input_path, "Input CSV to parse");
    cmd_prepare->add_option("--format", prepare.format,
                            "Input format: ff_percent or plain_decimal");

    dfl::TrainArgs train;
    auto* cmd_train = app.add_subcommand("train", "Train one (alpha, lambda, seed) model");
    cmd_train->fallthrough();
    cmd_train->add_option("--data", train.dataset_path, "Prepared plain_decimal dataset");
    cmd_train->add_option("--alpha", train.alpha, "Combined-loss weight in [0,1]");
    cmd_train->add_option("--lambda", train.lambda, "Risk aversion");
    cmd_train->add_option("--seed", train.seed, "Model/shuffle seed");
    cmd_train->add_option("--lookback", train.lookback, "Feature/covariance window");
    cmd_train->add_option("--ridge", train.ridge, "Covariance diagonal ridge");
    cmd_train->add_option("--train-len", train.split.train_len, "Training samples");
    cmd_train->add_option("--valid-len", train.split.valid_len, "Validation samples");
    cmd_train->add_option("--test-len", train.split.test_len, "Test samples");
    cmd_train->add_option("--max-iterations", train.max_iterations, "Mini-batch step cap");
    cmd_train->add_option("--patience", train.patience, "Early-stopping patience");
    cmd_train->add_option("--learning-rate", train.learning_rate, "Adam learning rate");
    cmd_train->add_option("--batch-size", train.batch_size, "Mini-batch size");
    cmd_train->add_option("--mse-scale", train.mse_scale, "MSE term scale");

    dfl::GridArgs grid;
    auto* cmd_grid = app.add_subcommand("grid", "Run the alpha x lambda x seed experiment");
    cmd_grid->fallthrough();
    cmd_grid->add_option("--config", grid.config_path, "Experiment config JSON")->required();
    cmd_grid->add_option("--jobs", grid.jobs, "Parallel cell workers");

    dfl::ReportArgs report;
    auto* cmd_report = app.add_subcommand("report", "Summarize a completed grid run");
    cmd_report->fallthrough();
    cmd_report->add_option("--run-dir", report.run_dir, "Grid output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    if (cmd_prepare->parsed()) {
        prepare.output_dir = output_dir;
        return dfl::cmd_prepare(prepare, std::cout, std::cerr);
    }
    if (cmd_train->parsed()) {
        train.output_dir = output_dir;
        return dfl::cmd_train(train, std::cout, std::cerr);
    }
    if (cmd_grid->parsed()) {
        grid.output_dir_override = output_dir;
        return dfl::cmd_grid(grid, std::cout, std::cerr);
    }
    if (cmd_report->parsed()) {
        return dfl::cmd_report(report, std::cout, std::cerr);
    }
    return 1;
}
