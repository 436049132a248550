// Command-line front end for the forecasting toolkit: prepares data, runs
// experiments, tunes ensembles, and emits every report format from a single
// JSON config.

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dpe/dpe.hpp"

namespace {

void print_artifacts(const std::vector<std::string>& artifacts) {
    for (const auto& path : artifacts) {
        std::cout << "wrote " << path << "\n";
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Proximity-ensemble forecasting toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed_override = 0;
    bool seed_given = false;
    int jobs = 1;
    app.add_option("--config", config_path, "experiment config (JSON)")->required();
    app.add_option("--out-dir", out_dir, "output directory");
    app.add_option("--seed", seed_override, "override the config seed")
        ->each([&](const std::string&) { seed_given = true; });
    app.add_option("--jobs", jobs, "parallel (dataset, model) cells")->check(CLI::PositiveNumber);

    auto* prepare = app.add_subcommand("prepare", "build and cache the frame datasets");
    auto* run = app.add_subcommand("run", "fit, tune and evaluate every dataset/model cell");
    auto* tune = app.add_subcommand("tune", "tune ensembles and store configs plus trials");
    auto* ablate = app.add_subcommand("ablate", "grid-versus-BOA tuning ablation");
    auto* sweep = app.add_subcommand("sweep", "sensitivity curve over alpha or epsilon");
    auto* dynamic = app.add_subcommand("dynamic", "multi-step forecast with a rolling scaler");
    auto* report = app.add_subcommand("report", "rebuild comparisons from stored metric matrices");

    std::string sweep_parameter = "epsilon";
    sweep->add_option("--parameter", sweep_parameter, "alpha or epsilon")
        ->check(CLI::IsMember({"alpha", "epsilon"}));
    int horizon = 0;
    dynamic->add_option("--horizon", horizon, "override the configured horizon")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        dpe::ExperimentConfig config = dpe::load_config(config_path);
        if (seed_given) {
            config.seed = seed_override;
        }

        if (prepare->parsed()) {
            std::vector<std::string> warnings;
            print_artifacts(dpe::cmd_prepare(config, out_dir, &warnings));
            for (const auto& w : warnings) {
                std::cerr << "warning: " << w << "\n";
            }
        } else if (run->parsed()) {
            const dpe::RunReport result = dpe::cmd_run(config, out_dir, jobs);
            print_artifacts(result.artifacts);
            int failures = 0;
            for (const auto& cell : result.cells) {
                if (cell.failed) {
                    ++failures;
                    std::cerr << "cell " << cell.dataset << "/" << cell.model
                              << " failed: " << cell.error << "\n";
                }
            }
            if (failures > 0) {
                std::cerr << failures << " cell(s) failed; reports cover the rest\n";
                return 3;
            }
        } else if (tune->parsed()) {
            print_artifacts(dpe::cmd_tune(config, out_dir));
        } else if (ablate->parsed()) {
            dpe::cmd_ablate(config, out_dir);
            std::cout << "wrote " << out_dir << "/ablation.csv\n";
        } else if (sweep->parsed()) {
            print_artifacts(dpe::cmd_sweep(config, out_dir, sweep_parameter));
        } else if (dynamic->parsed()) {
            print_artifacts(dpe::cmd_dynamic(config, out_dir, horizon));
        } else if (report->parsed()) {
            print_artifacts(dpe::cmd_report(config, out_dir));
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return dpe::exit_code_for(e);
    }
    return 0;
}
