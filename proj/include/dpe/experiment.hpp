#pragma once

#include <atomic>
#include <filesystem>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "dpe/config.hpp"
#include "dpe/csv.hpp"
#include "dpe/dynamic.hpp"
#include "dpe/ensemble.hpp"
#include "dpe/hpo.hpp"
#include "dpe/metrics.hpp"
#include "dpe/series.hpp"
#include "dpe/sweeps.hpp"
#include "dpe/synthetic.hpp"

namespace dpe {

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

struct PreparedDataset {
    std::string name;
    RawSeries raw;        // after cumsum, before scaling
    Scaler scaler;
    RawSeries scaled;
    FrameDataset frames;  // split train/val/test
    std::size_t scaler_train_rows = 0;
    std::uint64_t hash = 0;
};

namespace detail {

inline RawSeries load_dataset_source(const DatasetConfig& d, bool drop_missing,
                                     std::vector<std::string>* warnings) {
    if (d.source == "synthetic_sinusoid") {
        return make_sinusoid(d.length, d.data_seed, d.noise);
    }
    if (d.source == "synthetic_random_walk") {
        return make_random_walk(d.length, d.data_seed);
    }
    CsvSchema schema{d.timestamp_column, d.feature_columns, drop_missing};
    return load_csv(d.path, schema, warnings);
}

inline std::vector<std::string> resolve_cumsum_columns(const PreprocessConfig& pre,
                                                       const RawSeries& series) {
    if (pre.cumsum_columns) return *pre.cumsum_columns;
    return series.column_names;   // cumsum everything unless configured otherwise
}

/// Training-pair counts determine the scaler's reach: every row a training
/// window or target touches, and nothing later.
inline std::size_t scaler_rows_for(const std::size_t n_pairs, std::size_t window, double val_frac,
                                   double test_frac) {
    const auto n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n_pairs)));
    const auto n_test =
        static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n_pairs)));
    if (n_val + n_test >= n_pairs) {
        throw DataError("split leaves no training pairs");
    }
    return (n_pairs - n_val - n_test) + window;
}

} // namespace detail

inline PreparedDataset prepare_dataset(const ExperimentConfig& config, const DatasetConfig& dataset,
                                       std::vector<std::string>* warnings = nullptr) {
    PreparedDataset prep;
    prep.name = dataset.name;
    prep.hash = data_hash(config, dataset);

    const RawSeries loaded =
        detail::load_dataset_source(dataset, config.preprocessing.drop_missing, warnings);
    prep.raw = cumsum(loaded, detail::resolve_cumsum_columns(config.preprocessing, loaded));

    const std::size_t window = config.preprocessing.window;
    if (prep.raw.rows() <= static_cast<Eigen::Index>(window)) {
        throw DataError("dataset '" + dataset.name + "' is shorter than the window");
    }
    const std::size_t n_pairs = static_cast<std::size_t>(prep.raw.rows()) - window;
    prep.scaler_train_rows = detail::scaler_rows_for(n_pairs, window, config.preprocessing.val_frac,
                                                     config.preprocessing.test_frac);
    prep.scaler = fit_scaler(prep.raw, prep.scaler_train_rows);
    prep.scaled = scale(prep.raw, prep.scaler);
    prep.frames = split(build_frames(prep.scaled, window), config.preprocessing.val_frac,
                        config.preprocessing.test_frac);
    return prep;
}

/// Serialized prepared-data bundle. The frames rebuild deterministically from
/// the stored series, so the cache stays compact.
inline std::string write_prepared_cache(const PreparedDataset& prep, const ExperimentConfig& config,
                                        const std::string& out_dir) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["data_hash"] = hash_hex(prep.hash);
    j["name"] = prep.name;
    j["column_names"] = prep.raw.column_names;
    j["timestamps"] = prep.raw.timestamps;
    j["values"] = detail::matrix_to_json(prep.raw.values);
    j["window"] = config.preprocessing.window;
    j["val_frac"] = config.preprocessing.val_frac;
    j["test_frac"] = config.preprocessing.test_frac;
    j["scaler_train_rows"] = prep.scaler_train_rows;
    const std::string path = out_dir + "/prepared/" + hash_hex(prep.hash) + ".json";
    write_text_file(path, j.dump(2) + "\n");
    return path;
}

inline PreparedDataset load_prepared_cache(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError("cannot parse prepared cache '" + path + "': " + e.what());
    }
    if (j.at("format_version").get<int>() != 1) {
        throw DataError("unsupported prepared-cache version in '" + path + "'");
    }
    PreparedDataset prep;
    prep.name = j.at("name").get<std::string>();
    prep.raw.column_names = j.at("column_names").get<std::vector<std::string>>();
    prep.raw.timestamps = j.at("timestamps").get<std::vector<std::string>>();
    prep.raw.values = detail::matrix_from_json(j.at("values"));
    prep.scaler_train_rows = j.at("scaler_train_rows").get<std::size_t>();
    prep.hash = std::stoull(j.at("data_hash").get<std::string>(), nullptr, 16);
    prep.scaler = fit_scaler(prep.raw, prep.scaler_train_rows);
    prep.scaled = scale(prep.raw, prep.scaler);
    prep.frames = split(build_frames(prep.scaled, j.at("window").get<std::size_t>()),
                        j.at("val_frac").get<double>(), j.at("test_frac").get<double>());
    return prep;
}

inline std::vector<std::string> cmd_prepare(const ExperimentConfig& config,
                                            const std::string& out_dir,
                                            std::vector<std::string>* warnings = nullptr) {
    std::vector<std::string> artifacts;
    for (const DatasetConfig& dataset : config.datasets) {
        const PreparedDataset prep = prepare_dataset(config, dataset, warnings);
        artifacts.push_back(write_prepared_cache(prep, config, out_dir));
    }
    return artifacts;
}

// ---------------------------------------------------------------------------
// Experiment run
// ---------------------------------------------------------------------------

struct CellResult {
    std::string dataset;
    std::string model;
    bool is_ensemble = false;
    bool failed = false;
    std::string error;
    double rmse_scaled = 0.0;
    double rmse_raw = 0.0;
    std::optional<double> mape_scaled;
    std::optional<double> mape_raw;
    double fallback_rate = 0.0;
    EnsembleConfig tuned;               // ensembles only
    double validation_mse = 0.0;        // ensembles only
    ForecastRun run;
};

struct RunReport {
    std::vector<std::string> datasets;
    std::vector<std::string> models;   // machines first, then ensembles
    std::vector<CellResult> cells;     // datasets x models, row-major
    std::vector<std::string> artifacts;

    const CellResult& cell(std::size_t dataset_idx, std::size_t model_idx) const {
        return cells[dataset_idx * models.size() + model_idx];
    }
};

namespace detail {

inline Eigen::MatrixXd stack_targets(std::span<const FramePair> pairs) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(pairs.size()), pairs.front().target.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = pairs[i].target.transpose();
    }
    return out;
}

inline std::vector<std::string> target_timestamps(const PreparedDataset& prep,
                                                  std::span<const FramePair> pairs,
                                                  std::size_t window) {
    std::vector<std::string> out;
    out.reserve(pairs.size());
    for (const FramePair& p : pairs) {
        out.push_back(prep.raw.timestamps.at(static_cast<std::size_t>(p.frame.start_index) + window));
    }
    return out;
}

inline void fill_metrics(CellResult& cell, const PreparedDataset& prep,
                         const Eigen::MatrixXd& predictions_scaled) {
    cell.run.predictions_scaled = predictions_scaled;
    cell.run.actuals_scaled = stack_targets(prep.frames.test());
    cell.run.predictions_raw = inverse_scale(predictions_scaled, prep.scaler);
    cell.run.actuals_raw = inverse_scale(cell.run.actuals_scaled, prep.scaler);
    cell.rmse_scaled = rmse_per_dimension(cell.run.actuals_scaled, cell.run.predictions_scaled).mean();
    cell.rmse_raw = rmse_per_dimension(cell.run.actuals_raw, cell.run.predictions_raw).mean();
    try {
        cell.mape_scaled =
            mape_per_dimension(cell.run.actuals_scaled, cell.run.predictions_scaled).mean();
    } catch (const DataError&) {
        // a zero actual in scaled space: percentage error undefined there
    }
    try {
        cell.mape_raw = mape_per_dimension(cell.run.actuals_raw, cell.run.predictions_raw).mean();
    } catch (const DataError&) {
    }
}

inline TuneOptions tune_options_from(const TuningConfig& tuning, std::uint64_t seed) {
    TuneOptions opts;
    opts.method = tune_method_from_name(tuning.method);
    opts.budget = tuning.budget;
    opts.grid_resolution = tuning.grid_resolution;
    opts.tpe = tuning.tpe;
    opts.grid_cap = tuning.grid_cap;
    opts.seed = seed;
    return opts;
}

/// Simple index-parallel loop; jobs <= 1 runs inline. Results must be written
/// into per-index slots so the outcome is identical either way.
template <typename Fn>
void parallel_for(std::size_t count, int jobs, Fn&& fn) {
    if (jobs <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), count);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

inline CellResult run_machine_cell(const ExperimentConfig& config, const PreparedDataset& prep,
                                   const MachineConfig& machine_config, std::uint64_t seed) {
    CellResult cell;
    cell.dataset = prep.name;
    cell.model = machine_config.name;
    ParamMap params = machine_config.params;
    if (machine_config.tune_space) {
        const MachineTuneResult tuned =
            tune_machine(prep.frames, {machine_config.type, machine_config.params},
                         *machine_config.tune_space, tune_options_from(config.tuning, seed));
        params = tuned.params;
    }
    auto machine = make_machine(machine_config.type, params);
    machine->fit(prep.frames.train(), seed);
    fill_metrics(cell, prep, machine->predict_pairs(prep.frames.test()));
    cell.run.model = cell.model;
    cell.run.dataset = prep.name;
    cell.run.timestamps = target_timestamps(prep, prep.frames.test(), config.preprocessing.window);
    return cell;
}

struct EnsembleCellOutput {
    CellResult cell;
    EnsembleBatch batch;
    TrialMemory trials;
};

inline EnsembleCellOutput run_ensemble_cell(const ExperimentConfig& config,
                                            const PreparedDataset& prep,
                                            EnsembleVariant variant, std::uint64_t seed) {
    EnsembleCellOutput out;
    CellResult& cell = out.cell;
    cell.dataset = prep.name;
    cell.model = variant_name(variant);
    cell.is_ensemble = true;

    const std::vector<MachineSpec> roster = config.roster();
    const TuneResult tuned =
        tune_ensemble(prep.frames, roster, variant, tune_options_from(config.tuning, seed));
    cell.tuned = tuned.config;
    cell.validation_mse = tuned.validation_mse;
    out.trials = tuned.trials;

    MachineBank bank(roster);
    fit_bank(bank, prep.frames, tuned.config, seed);
    const ProximitySet prox = build_proximity_set(bank, prep.frames, tuned.config,
                                                  ProximityPhase::Test);
    out.batch = predict_ensemble_batch(bank, prox, prep.frames.test(), tuned.config);
    fill_metrics(cell, prep, out.batch.predictions);
    cell.fallback_rate = out.batch.fallback_rate();
    cell.run.fallback_count = out.batch.fallback_count;
    cell.run.model = cell.model;
    cell.run.dataset = prep.name;
    cell.run.timestamps = target_timestamps(prep, prep.frames.test(), config.preprocessing.window);
    return out;
}

inline std::string metric_matrix_csv(const RunReport& report, const std::string& metric,
                                     bool scaled_space) {
    std::string out = "dataset";
    for (const auto& m : report.models) out += "," + csv_quote_if_needed(m);
    out += "\n";
    for (std::size_t d = 0; d < report.datasets.size(); ++d) {
        out += csv_quote_if_needed(report.datasets[d]);
        for (std::size_t m = 0; m < report.models.size(); ++m) {
            const CellResult& cell = report.cell(d, m);
            out += ",";
            if (cell.failed) continue;
            if (metric == "rmse") {
                out += format_double(scaled_space ? cell.rmse_scaled : cell.rmse_raw);
            } else {
                const auto& value = scaled_space ? cell.mape_scaled : cell.mape_raw;
                if (value) out += format_double(*value);
            }
        }
        out += "\n";
    }
    return out;
}

inline nlohmann::json comparison_to_json(const ComparisonReport& report, const std::string& metric,
                                         const std::string& space) {
    nlohmann::json ranks = nlohmann::json::object();
    nlohmann::json p_values = nlohmann::json::object();
    for (std::size_t m = 0; m < report.models.size(); ++m) {
        ranks[report.models[m]] = report.ranks(static_cast<Eigen::Index>(m));
        if (report.models[m] == report.reference) continue;
        if (report.p_values[m]) {
            p_values[report.models[m]] = *report.p_values[m];
        } else {
            p_values[report.models[m]] = nullptr;
        }
    }
    return {{"metric", metric},      {"space", space},           {"reference", report.reference},
            {"models", report.models}, {"datasets", report.datasets}, {"average_ranks", ranks},
            {"p_values", p_values}};
}

/// Comparison over the models with a complete numeric column; failed or
/// metric-less models are left out rather than faking values.
inline std::optional<ComparisonReport> comparison_for(const RunReport& report,
                                                      const std::string& metric, bool scaled_space,
                                                      const std::string& reference) {
    std::vector<std::string> usable;
    for (std::size_t m = 0; m < report.models.size(); ++m) {
        bool complete = true;
        for (std::size_t d = 0; d < report.datasets.size(); ++d) {
            const CellResult& cell = report.cell(d, m);
            if (cell.failed) complete = false;
            if (metric == "mape" && !(scaled_space ? cell.mape_scaled : cell.mape_raw)) {
                complete = false;
            }
        }
        if (complete) usable.push_back(report.models[m]);
    }
    if (usable.size() < 2 ||
        std::find(usable.begin(), usable.end(), reference) == usable.end()) {
        return std::nullopt;
    }
    Eigen::MatrixXd matrix(static_cast<Eigen::Index>(report.datasets.size()),
                           static_cast<Eigen::Index>(usable.size()));
    for (std::size_t d = 0; d < report.datasets.size(); ++d) {
        for (std::size_t u = 0; u < usable.size(); ++u) {
            const auto m = static_cast<std::size_t>(
                std::find(report.models.begin(), report.models.end(), usable[u]) -
                report.models.begin());
            const CellResult& cell = report.cell(d, m);
            double value;
            if (metric == "rmse") {
                value = scaled_space ? cell.rmse_scaled : cell.rmse_raw;
            } else {
                value = scaled_space ? *cell.mape_scaled : *cell.mape_raw;
            }
            matrix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(u)) = value;
        }
    }
    return build_comparison(usable, report.datasets, matrix, reference);
}

inline void write_manifest(const std::string& out_dir, const ExperimentConfig& config,
                           const std::string& command, const std::vector<std::string>& artifacts) {
    nlohmann::json j;
    const std::string path = out_dir + "/manifest.json";
    if (std::filesystem::exists(path)) {
        try {
            j = nlohmann::json::parse(read_text_file(path));
        } catch (const nlohmann::json::exception&) {
            j = nlohmann::json();
        }
    }
    j["config_hash"] = hash_hex(config_hash(config));
    nlohmann::json entries = j.contains("artifacts") ? j["artifacts"] : nlohmann::json::object();
    nlohmann::json list = nlohmann::json::array();
    for (const auto& a : artifacts) {
        list.push_back(std::filesystem::relative(a, out_dir).string());
    }
    entries[command] = list;
    j["artifacts"] = entries;
    write_text_file(path, j.dump(2) + "\n");
}

} // namespace detail

/// Fits, tunes and evaluates every (dataset, model) cell: each machine on its
/// own column plus one column per ensemble variant. Failures are isolated per
/// cell; everything else completes and the failed column is reported as such.
inline RunReport cmd_run(const ExperimentConfig& config, const std::string& out_dir, int jobs = 1) {
    machine_registry();   // materialize before any worker threads exist

    RunReport report;
    for (const auto& d : config.datasets) report.datasets.push_back(d.name);
    for (const auto& m : config.machines) report.models.push_back(m.name);
    for (const auto& e : config.ensembles) report.models.push_back(e);

    std::vector<PreparedDataset> prepared;
    prepared.reserve(config.datasets.size());
    for (const auto& dataset : config.datasets) {
        prepared.push_back(prepare_dataset(config, dataset));
    }

    const std::size_t n_models = report.models.size();
    const std::size_t n_cells = prepared.size() * n_models;
    report.cells.resize(n_cells);
    std::vector<detail::EnsembleCellOutput> ensemble_outputs(n_cells);

    detail::parallel_for(n_cells, jobs, [&](std::size_t idx) {
        const std::size_t d = idx / n_models;
        const std::size_t m = idx % n_models;
        const std::uint64_t cell_seed = derive_seed(config.seed, d, m);
        try {
            if (m < config.machines.size()) {
                report.cells[idx] =
                    detail::run_machine_cell(config, prepared[d], config.machines[m], cell_seed);
            } else {
                const EnsembleVariant variant =
                    variant_from_name(config.ensembles[m - config.machines.size()]);
                ensemble_outputs[idx] =
                    detail::run_ensemble_cell(config, prepared[d], variant, cell_seed);
                report.cells[idx] = ensemble_outputs[idx].cell;
            }
        } catch (const std::exception& e) {
            CellResult& cell = report.cells[idx];
            cell.dataset = prepared[d].name;
            cell.model = report.models[m];
            cell.failed = true;
            cell.error = e.what();
        }
    });

    // ---- artifacts ----
    std::vector<std::string>& artifacts = report.artifacts;
    for (const auto& prep : prepared) {
        artifacts.push_back(write_prepared_cache(prep, config, out_dir));
    }

    const bool scaled_space = config.evaluation.metrics_space == "scaled";
    for (const std::string metric : {"rmse", "mape"}) {
        const std::string path = out_dir + "/metrics_" + metric + ".csv";
        write_text_file(path, detail::metric_matrix_csv(report, metric, scaled_space));
        artifacts.push_back(path);
        const auto comparison =
            detail::comparison_for(report, metric, scaled_space, config.evaluation.reference_model);
        if (comparison) {
            const std::string cpath = out_dir + "/comparison_" + metric + ".json";
            write_text_file(cpath, detail::comparison_to_json(*comparison, metric,
                                                              config.evaluation.metrics_space)
                                           .dump(2) +
                                       "\n");
            artifacts.push_back(cpath);
        }
    }

    nlohmann::json tuned = nlohmann::json::object();
    nlohmann::json summary;
    summary["models"] = report.models;
    summary["cells"] = nlohmann::json::array();
    for (std::size_t d = 0; d < prepared.size(); ++d) {
        for (std::size_t m = 0; m < n_models; ++m) {
            const std::size_t idx = d * n_models + m;
            const CellResult& cell = report.cells[idx];
            nlohmann::json cj = {{"dataset", cell.dataset}, {"model", cell.model}};
            if (cell.failed) {
                cj["failed"] = true;
                cj["error"] = cell.error;
            } else {
                cj["rmse_scaled"] = cell.rmse_scaled;
                cj["rmse_raw"] = cell.rmse_raw;
                if (cell.mape_scaled) cj["mape_scaled"] = *cell.mape_scaled;
                if (cell.mape_raw) cj["mape_raw"] = *cell.mape_raw;
                if (cell.is_ensemble) {
                    cj["fallback_rate"] = cell.fallback_rate;
                    cj["validation_mse"] = cell.validation_mse;
                    cj["epsilon"] = cell.tuned.epsilon;
                    cj["alpha"] = cell.tuned.alpha;
                    if (cell.tuned.variant != EnsembleVariant::DPE) {
                        cj["partition_fraction"] = cell.tuned.partition_fraction;
                    }
                    tuned[cell.dataset][cell.model] = {
                        {"epsilon", cell.tuned.epsilon},
                        {"alpha", cell.tuned.alpha},
                        {"partition_fraction", cell.tuned.partition_fraction},
                        {"validation_mse", cell.validation_mse}};

                    const auto& output = ensemble_outputs[idx];
                    const std::string ppath =
                        out_dir + "/predictions/" + cell.dataset + "_" + cell.model + ".csv";
                    export_predictions_csv(ppath, cell.run.timestamps, output.batch,
                                           prepared[d].raw.column_names);
                    artifacts.push_back(ppath);
                    const std::string tpath =
                        out_dir + "/trials/" + cell.dataset + "_" + cell.model + ".csv";
                    export_trials_csv(tpath, output.trials);
                    artifacts.push_back(tpath);
                }
            }
            summary["cells"].push_back(cj);
        }
    }
    {
        const std::string path = out_dir + "/tuned_configs.json";
        write_text_file(path, tuned.dump(2) + "\n");
        artifacts.push_back(path);
    }
    {
        const std::string path = out_dir + "/summary.json";
        write_text_file(path, summary.dump(2) + "\n");
        artifacts.push_back(path);
    }
    detail::write_manifest(out_dir, config, "run", artifacts);
    return report;
}

// ---------------------------------------------------------------------------
// Ablation: tuning method by ensemble variant
// ---------------------------------------------------------------------------

struct AblationRow {
    std::string variant;         // GridCOBRA, BOACOBRA, GridDPE, BOADPE, BOAPaDPE, GridPaDPE
    double rmse = 0.0;
    double mape = 0.0;
    double rmse_normalized = 0.0;
    double mape_normalized = 0.0;
};

/// The six tuning-method-by-variant combinations, averaged over datasets and
/// normalized by the worst variant per metric so every value lands in (0,1].
inline std::vector<AblationRow> cmd_ablate(const ExperimentConfig& config,
                                           const std::string& out_dir) {
    struct VariantSpec {
        const char* label;
        EnsembleVariant variant;
        TuneMethod method;
    };
    const VariantSpec variants[] = {
        {"GridCOBRA", EnsembleVariant::COBRA, TuneMethod::Grid},
        {"BOACOBRA", EnsembleVariant::COBRA, TuneMethod::Tpe},
        {"GridDPE", EnsembleVariant::DPE, TuneMethod::Grid},
        {"BOADPE", EnsembleVariant::DPE, TuneMethod::Tpe},
        {"BOAPaDPE", EnsembleVariant::PaDPE, TuneMethod::Tpe},
        {"GridPaDPE", EnsembleVariant::PaDPE, TuneMethod::Grid},
    };

    const std::vector<MachineSpec> roster = config.roster();
    // budget parity: the grid must spend at least as many trials as TPE gets
    for (const auto& v : variants) {
        if (v.method != TuneMethod::Grid) continue;
        const std::size_t cells =
            grid_size(ensemble_search_space(v.variant, roster.size()), config.tuning.grid_resolution);
        if (cells < static_cast<std::size_t>(config.tuning.budget)) {
            throw ConfigError(std::string("ablation budget parity: ") + v.label + " grid has " +
                              std::to_string(cells) + " points but the TPE budget is " +
                              std::to_string(config.tuning.budget));
        }
    }

    const bool scaled_space = config.evaluation.metrics_space == "scaled";
    std::vector<AblationRow> rows;
    for (std::size_t v = 0; v < std::size(variants); ++v) {
        AblationRow row;
        row.variant = variants[v].label;
        double rmse_sum = 0.0;
        double mape_sum = 0.0;
        for (std::size_t d = 0; d < config.datasets.size(); ++d) {
            const PreparedDataset prep = prepare_dataset(config, config.datasets[d]);
            TuneOptions opts = detail::tune_options_from(config.tuning,
                                                         derive_seed(derive_seed(config.seed, 0xab1a7e), d, v));
            opts.method = variants[v].method;
            const TuneResult tuned = tune_ensemble(prep.frames, roster, variants[v].variant, opts);
            MachineBank bank(roster);
            fit_bank(bank, prep.frames, tuned.config, opts.seed);
            const ProximitySet prox =
                build_proximity_set(bank, prep.frames, tuned.config, ProximityPhase::Test);
            const EnsembleBatch batch =
                predict_ensemble_batch(bank, prox, prep.frames.test(), tuned.config);
            CellResult cell;
            detail::fill_metrics(cell, prep, batch.predictions);
            rmse_sum += scaled_space ? cell.rmse_scaled : cell.rmse_raw;
            const auto& mape_value = scaled_space ? cell.mape_scaled : cell.mape_raw;
            if (!mape_value) {
                throw DataError("ablation: percentage error undefined on dataset '" + prep.name +
                                "' (zero actuals)");
            }
            mape_sum += *mape_value;
        }
        row.rmse = rmse_sum / static_cast<double>(config.datasets.size());
        row.mape = mape_sum / static_cast<double>(config.datasets.size());
        rows.push_back(row);
    }

    double rmse_max = 0.0;
    double mape_max = 0.0;
    for (const auto& row : rows) {
        rmse_max = std::max(rmse_max, row.rmse);
        mape_max = std::max(mape_max, row.mape);
    }
    for (auto& row : rows) {
        row.rmse_normalized = row.rmse / rmse_max;
        row.mape_normalized = row.mape / mape_max;
    }

    std::string csv = "variant,rmse,mape,rmse_normalized,mape_normalized\n";
    for (const auto& row : rows) {
        csv += row.variant + "," + format_double(row.rmse) + "," + format_double(row.mape) + "," +
               format_double(row.rmse_normalized) + "," + format_double(row.mape_normalized) + "\n";
    }
    const std::string path = out_dir + "/ablation.csv";
    write_text_file(path, csv);
    detail::write_manifest(out_dir, config, "ablate", {path});
    return rows;
}

// ---------------------------------------------------------------------------
// Sweeps, dynamic prediction, tuning, report rebuild
// ---------------------------------------------------------------------------

inline std::vector<std::string> cmd_sweep(const ExperimentConfig& config,
                                          const std::string& out_dir,
                                          const std::string& parameter) {
    if (parameter != "alpha" && parameter != "epsilon") {
        throw ConfigError("sweep parameter must be 'alpha' or 'epsilon'");
    }
    const std::vector<MachineSpec> roster = config.roster();
    const EnsembleVariant variant = variant_from_name(config.sweep.variant);
    std::vector<std::string> artifacts;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        const PreparedDataset prep = prepare_dataset(config, config.datasets[d]);
        const std::uint64_t seed = derive_seed(config.seed, 0x5afe, d);
        const TuneResult tuned = tune_ensemble(prep.frames, roster, variant,
                                               detail::tune_options_from(config.tuning, seed));
        SweepCurve curve;
        if (parameter == "alpha") {
            const auto alphas = config.sweep.alphas.empty() ? default_alpha_sweep(roster.size())
                                                            : config.sweep.alphas;
            curve = sweep_alpha(prep.frames, roster, tuned.config, alphas, seed);
        } else {
            const auto epsilons =
                config.sweep.epsilons.empty() ? default_epsilon_sweep() : config.sweep.epsilons;
            curve = sweep_epsilon(prep.frames, roster, tuned.config, epsilons, seed);
        }
        const std::string path = out_dir + "/sweep_" + parameter + "_" + prep.name + ".csv";
        write_sweep_csv(path, curve);
        artifacts.push_back(path);
    }
    detail::write_manifest(out_dir, config, "sweep_" + parameter, artifacts);
    return artifacts;
}

inline std::vector<std::string> cmd_dynamic(const ExperimentConfig& config,
                                            const std::string& out_dir, int horizon_override = 0) {
    const int horizon = horizon_override > 0 ? horizon_override : config.dynamic.horizon;
    const std::vector<MachineSpec> roster = config.roster();
    const EnsembleVariant variant = variant_from_name(config.dynamic.variant);
    std::vector<std::string> artifacts;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        const PreparedDataset prep = prepare_dataset(config, config.datasets[d]);
        const std::uint64_t seed = derive_seed(config.seed, 0xd1a, d);
        const TuneResult tuned = tune_ensemble(prep.frames, roster, variant,
                                               detail::tune_options_from(config.tuning, seed));
        MachineBank bank(roster);
        fit_bank(bank, prep.frames, tuned.config, seed);
        const ProximitySet prox =
            build_proximity_set(bank, prep.frames, tuned.config, ProximityPhase::Test);
        DynamicOptions options;
        options.window = config.preprocessing.window;
        options.refit_every = config.dynamic.refit_every;
        options.refit_seed = seed;
        const DynamicState state =
            dynamic_forecast(prep.raw, bank, prox, tuned.config, horizon, options);
        const std::string path = out_dir + "/dynamic_" + prep.name + ".csv";
        export_dynamic_log(state, path);
        artifacts.push_back(path);
    }
    detail::write_manifest(out_dir, config, "dynamic", artifacts);
    return artifacts;
}

/// Tunes every configured ensemble on every dataset and writes the winning
/// configs plus full trial histories, without running the test evaluation.
inline std::vector<std::string> cmd_tune(const ExperimentConfig& config,
                                         const std::string& out_dir) {
    const std::vector<MachineSpec> roster = config.roster();
    nlohmann::json tuned = nlohmann::json::object();
    std::vector<std::string> artifacts;
    for (std::size_t d = 0; d < config.datasets.size(); ++d) {
        const PreparedDataset prep = prepare_dataset(config, config.datasets[d]);
        for (std::size_t e = 0; e < config.ensembles.size(); ++e) {
            const EnsembleVariant variant = variant_from_name(config.ensembles[e]);
            const std::uint64_t seed =
                derive_seed(config.seed, d, config.machines.size() + e);
            const TuneResult result = tune_ensemble(prep.frames, roster, variant,
                                                    detail::tune_options_from(config.tuning, seed));
            tuned[prep.name][config.ensembles[e]] = {
                {"epsilon", result.config.epsilon},
                {"alpha", result.config.alpha},
                {"partition_fraction", result.config.partition_fraction},
                {"validation_mse", result.validation_mse}};
            const std::string tpath =
                out_dir + "/trials/" + prep.name + "_" + config.ensembles[e] + ".csv";
            export_trials_csv(tpath, result.trials);
            artifacts.push_back(tpath);
        }
    }
    const std::string path = out_dir + "/tuned_configs.json";
    write_text_file(path, tuned.dump(2) + "\n");
    artifacts.push_back(path);
    detail::write_manifest(out_dir, config, "tune", artifacts);
    return artifacts;
}

/// Process exit codes: 1 config error, 2 data error, 3 anything else.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 1;
    if (dynamic_cast<const DataError*>(&e)) return 2;
    return 3;
}

/// Rebuilds the comparison reports from metric matrices already on disk.
inline std::vector<std::string> cmd_report(const ExperimentConfig& config,
                                           const std::string& out_dir) {
    std::vector<std::string> artifacts;
    for (const std::string metric : {"rmse", "mape"}) {
        const std::string matrix_path = out_dir + "/metrics_" + metric + ".csv";
        if (!std::filesystem::exists(matrix_path)) continue;
        const auto [header, rows] = read_csv_table(matrix_path);
        if (header.size() < 2 || header.front() != "dataset") {
            throw DataError("'" + matrix_path + "' is not a metric matrix");
        }
        std::vector<std::string> models(header.begin() + 1, header.end());
        std::vector<std::string> datasets;
        // drop models with incomplete columns, as in the live pipeline
        std::vector<bool> complete(models.size(), true);
        std::vector<std::vector<double>> values(rows.size(), std::vector<double>(models.size()));
        for (std::size_t r = 0; r < rows.size(); ++r) {
            datasets.push_back(rows[r].at(0));
            for (std::size_t m = 0; m < models.size(); ++m) {
                const auto parsed = detail::parse_double(rows[r].at(m + 1));
                if (parsed) {
                    values[r][m] = *parsed;
                } else {
                    complete[m] = false;
                }
            }
        }
        std::vector<std::string> usable;
        for (std::size_t m = 0; m < models.size(); ++m) {
            if (complete[m]) usable.push_back(models[m]);
        }
        if (usable.size() < 2 || std::find(usable.begin(), usable.end(),
                                           config.evaluation.reference_model) == usable.end()) {
            continue;
        }
        Eigen::MatrixXd matrix(static_cast<Eigen::Index>(datasets.size()),
                               static_cast<Eigen::Index>(usable.size()));
        for (std::size_t r = 0; r < datasets.size(); ++r) {
            Eigen::Index col = 0;
            for (std::size_t m = 0; m < models.size(); ++m) {
                if (!complete[m]) continue;
                matrix(static_cast<Eigen::Index>(r), col++) = values[r][m];
            }
        }
        const ComparisonReport comparison =
            build_comparison(usable, datasets, matrix, config.evaluation.reference_model);
        const std::string path = out_dir + "/comparison_" + metric + ".json";
        write_text_file(path, detail::comparison_to_json(comparison, metric,
                                                         config.evaluation.metrics_space)
                                      .dump(2) +
                                  "\n");
        artifacts.push_back(path);
    }
    detail::write_manifest(out_dir, config, "report", artifacts);
    return artifacts;
}

} // namespace dpe
