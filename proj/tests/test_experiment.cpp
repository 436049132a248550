#include <catch2/catch.hpp>

#include <filesystem>

#include "dpe/dpe.hpp"
#include "test_util.hpp"

using namespace dpe;
namespace fs = std::filesystem;

namespace {

nlohmann::json base_config_json() {
    return {
        {"config_version", 1},
        {"seed", 7},
        {"datasets",
         {{{"name", "sine"}, {"source", "synthetic_sinusoid"}, {"length", 124}, {"data_seed", 3}},
          {{"name", "walk"}, {"source", "synthetic_random_walk"}, {"length", 124}, {"data_seed", 4}}}},
        {"preprocessing",
         {{"window", 4}, {"val_frac", 0.1}, {"test_frac", 0.1}, {"cumsum_columns", nlohmann::json::array()}}},
        {"machines",
         {{{"name", "ridge"}, {"params", {{"lambda", 1e-3}}}},
          {{"name", "knn"}, {"params", {{"k", 3}}}}}},
        {"ensembles", {"dpe", "cobra"}},
        {"tuning", {{"method", "tpe"}, {"budget", 8}, {"tpe", {{"n_startup", 4}}}}},
        {"evaluation", {{"metrics_space", "scaled"}, {"reference_model", "dpe"}}},
        {"dynamic", {{"variant", "dpe"}, {"horizon", 4}}},
    };
}

std::map<std::string, std::string> snapshot_tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file()) {
            files[fs::relative(entry.path(), root).string()] =
                read_text_file(entry.path().string());
        }
    }
    return files;
}

} // namespace

TEST_CASE("config parsing validates the schema") {
    const ExperimentConfig config = parse_config(base_config_json());
    CHECK(config.seed == 7);
    CHECK(config.datasets.size() == 2);
    CHECK(config.machines.size() == 2);
    CHECK(config.ensembles == std::vector<std::string>{"dpe", "cobra"});
    CHECK(config.preprocessing.cumsum_columns->empty());

    auto no_datasets = base_config_json();
    no_datasets["datasets"] = nlohmann::json::array();
    CHECK_THROWS_AS(parse_config(no_datasets), ConfigError);

    auto dup_machines = base_config_json();
    dup_machines["machines"].push_back({{"name", "ridge"}});
    CHECK_THROWS_AS(parse_config(dup_machines), ConfigError);

    auto bad_variant = base_config_json();
    bad_variant["ensembles"] = {"dpe", "nope"};
    CHECK_THROWS_AS(parse_config(bad_variant), ConfigError);

    auto bad_space = base_config_json();
    bad_space["evaluation"]["metrics_space"] = "logarithmic";
    CHECK_THROWS_AS(parse_config(bad_space), ConfigError);

    auto csv_needs_path = base_config_json();
    csv_needs_path["datasets"][0] = {{"name", "x"}, {"source", "csv"}};
    CHECK_THROWS_AS(parse_config(csv_needs_path), ConfigError);
}

TEST_CASE("config hashing is stable and covers output-changing fields") {
    const ExperimentConfig a = parse_config(base_config_json());
    const ExperimentConfig b = parse_config(base_config_json());
    CHECK(config_hash(a) == config_hash(b));

    auto changed = base_config_json();
    changed["preprocessing"]["window"] = 5;
    CHECK(config_hash(parse_config(changed)) != config_hash(a));
    CHECK(data_hash(parse_config(changed), parse_config(changed).datasets[0]) !=
          data_hash(a, a.datasets[0]));

    auto reseeded = base_config_json();
    reseeded["seed"] = 8;
    CHECK(config_hash(parse_config(reseeded)) != config_hash(a));
    // the data identity must not depend on the run seed
    CHECK(data_hash(parse_config(reseeded), parse_config(reseeded).datasets[0]) ==
          data_hash(a, a.datasets[0]));
}

TEST_CASE("prepare writes a cache keyed by the data hash and loads back") {
    const ExperimentConfig config = parse_config(base_config_json());
    testutil::TempDir dir;
    const auto artifacts = cmd_prepare(config, dir.path().string());
    REQUIRE(artifacts.size() == 2);
    for (const auto& path : artifacts) {
        CHECK(fs::exists(path));
    }
    CHECK(artifacts[0].find(hash_hex(data_hash(config, config.datasets[0]))) != std::string::npos);

    const PreparedDataset direct = prepare_dataset(config, config.datasets[0]);
    const PreparedDataset cached = load_prepared_cache(artifacts[0]);
    CHECK(cached.name == direct.name);
    CHECK(cached.frames.n_train == direct.frames.n_train);
    CHECK(cached.frames.n_val == direct.frames.n_val);
    CHECK(cached.scaled.values == direct.scaled.values);
}

TEST_CASE("prepare surfaces missing files with the path") {
    auto j = base_config_json();
    j["datasets"][0] = {{"name", "gone"},
                        {"source", "csv"},
                        {"path", "/nonexistent/file.csv"},
                        {"timestamp_column", "t"},
                        {"feature_columns", {"a"}}};
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    CHECK_THROWS_WITH(cmd_prepare(config, dir.path().string()),
                      Catch::Contains("/nonexistent/file.csv"));
}

TEST_CASE("cumsum defaults to every feature column when unset") {
    auto j = base_config_json();
    j["preprocessing"].erase("cumsum_columns");
    const ExperimentConfig config = parse_config(j);
    REQUIRE_FALSE(config.preprocessing.cumsum_columns.has_value());
    const PreparedDataset prep = prepare_dataset(config, config.datasets[0]);
    const RawSeries plain = make_sinusoid(124, 3);
    // first row unchanged, second row accumulates
    CHECK(prep.raw.values(0, 0) == plain.values(0, 0));
    CHECK(prep.raw.values(1, 0) == Approx(plain.values(0, 0) + plain.values(1, 0)));
}

TEST_CASE("run produces one column per machine and ensemble with reports") {
    const ExperimentConfig config = parse_config(base_config_json());
    testutil::TempDir dir;
    const RunReport report = cmd_run(config, dir.path().string());
    REQUIRE(report.models == std::vector<std::string>{"ridge", "knn", "dpe", "cobra"});
    REQUIRE(report.cells.size() == 8);
    for (const CellResult& cell : report.cells) {
        CAPTURE(cell.dataset, cell.model, cell.error);
        REQUIRE_FALSE(cell.failed);
        CHECK(cell.rmse_scaled >= 0.0);
    }

    const auto [header, rows] = read_csv_table(dir.file("metrics_rmse.csv"));
    REQUIRE(header == std::vector<std::string>{"dataset", "ridge", "knn", "dpe", "cobra"});
    REQUIRE(rows.size() == 2);

    CHECK(fs::exists(dir.file("metrics_mape.csv")));
    CHECK(fs::exists(dir.file("summary.json")));
    CHECK(fs::exists(dir.file("tuned_configs.json")));
    CHECK(fs::exists(dir.file("predictions/sine_dpe.csv")));
    CHECK(fs::exists(dir.file("trials/walk_cobra.csv")));

    const auto manifest = nlohmann::json::parse(read_text_file(dir.file("manifest.json")));
    CHECK(manifest.at("config_hash").get<std::string>() == hash_hex(config_hash(config)));
    CHECK(manifest.at("artifacts").contains("run"));
}

TEST_CASE("identical runs are byte-identical") {
    const ExperimentConfig config = parse_config(base_config_json());
    testutil::TempDir dir_a, dir_b;
    cmd_run(config, dir_a.path().string());
    cmd_run(config, dir_b.path().string());
    const auto tree_a = snapshot_tree(dir_a.path());
    const auto tree_b = snapshot_tree(dir_b.path());
    REQUIRE(tree_a.size() == tree_b.size());
    for (const auto& [name, content] : tree_a) {
        CAPTURE(name);
        REQUIRE(tree_b.count(name) == 1);
        REQUIRE(content == tree_b.at(name));
    }
}

TEST_CASE("a crashing machine fails its column without sinking the run") {
    register_machine("crash", [](const ParamMap&) -> std::unique_ptr<Machine> {
        class CrashMachine : public Machine {
        public:
            CrashMachine() : Machine("crash") {}
            void fit(std::span<const FramePair>, std::uint64_t) override {
                throw std::runtime_error("deliberate failure");
            }
            Eigen::VectorXd predict(const Frame&) const override {
                throw std::runtime_error("unreachable");
            }
            nlohmann::json to_json() const override { return {}; }
        };
        return std::make_unique<CrashMachine>();
    });

    auto j = base_config_json();
    j["datasets"] = {{{"name", "sine"}, {"source", "synthetic_sinusoid"}, {"length", 124}}};
    j["machines"] = {{{"name", "ridge"}, {"params", {{"lambda", 1e-3}}}}, {{"name", "crash"}}};
    j["ensembles"] = nlohmann::json::array();
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    const RunReport report = cmd_run(config, dir.path().string());
    REQUIRE(report.cells.size() == 2);
    CHECK_FALSE(report.cell(0, 0).failed);
    CHECK(report.cell(0, 1).failed);
    CHECK_THAT(report.cell(0, 1).error, Catch::Contains("deliberate failure"));

    const auto summary = nlohmann::json::parse(read_text_file(dir.file("summary.json")));
    CHECK(summary.at("cells").at(1).at("failed").get<bool>());
}

TEST_CASE("parallel cell execution matches the sequential run") {
    const ExperimentConfig config = parse_config(base_config_json());
    testutil::TempDir dir_seq, dir_par;
    cmd_run(config, dir_seq.path().string(), 1);
    cmd_run(config, dir_par.path().string(), 3);
    const auto tree_seq = snapshot_tree(dir_seq.path());
    const auto tree_par = snapshot_tree(dir_par.path());
    REQUIRE(tree_seq.size() == tree_par.size());
    for (const auto& [name, content] : tree_seq) {
        CAPTURE(name);
        REQUIRE(content == tree_par.at(name));
    }
}

TEST_CASE("ablation emits the six variants with errors normalized into (0,1]") {
    auto j = base_config_json();
    j["datasets"] = {{{"name", "sine"}, {"source", "synthetic_sinusoid"}, {"length", 124}}};
    j["tuning"]["budget"] = 6;
    j["tuning"]["grid_resolution"] = {{"epsilon", 4}, {"partition_fraction", 3}};
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    const auto rows = cmd_ablate(config, dir.path().string());
    REQUIRE(rows.size() == 6);
    CHECK(rows[0].variant == "GridCOBRA");
    CHECK(rows[1].variant == "BOACOBRA");
    CHECK(rows[2].variant == "GridDPE");
    CHECK(rows[3].variant == "BOADPE");
    CHECK(rows[4].variant == "BOAPaDPE");
    CHECK(rows[5].variant == "GridPaDPE");
    bool rmse_hits_one = false;
    for (const auto& row : rows) {
        CHECK(row.rmse_normalized > 0.0);
        CHECK(row.rmse_normalized <= 1.0);
        CHECK(row.mape_normalized > 0.0);
        CHECK(row.mape_normalized <= 1.0);
        if (row.rmse_normalized == 1.0) rmse_hits_one = true;
    }
    CHECK(rmse_hits_one);
    CHECK(fs::exists(dir.file("ablation.csv")));

    // determinism under the fixed seed
    testutil::TempDir dir_b;
    const auto rows_b = cmd_ablate(config, dir_b.path().string());
    CHECK(read_text_file(dir.file("ablation.csv")) == read_text_file(dir_b.file("ablation.csv")));
}

TEST_CASE("ablation rejects a grid smaller than the TPE budget") {
    auto j = base_config_json();
    j["tuning"]["budget"] = 60;
    j["tuning"]["grid_resolution"] = {{"epsilon", 10}, {"partition_fraction", 5}};
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    CHECK_THROWS_AS(cmd_ablate(config, dir.path().string()), ConfigError);
}

TEST_CASE("sweep command writes one curve per dataset") {
    auto j = base_config_json();
    j["tuning"]["budget"] = 6;
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    const auto artifacts = cmd_sweep(config, dir.path().string(), "alpha");
    REQUIRE(artifacts.size() == 2);
    const auto [header, rows] = read_csv_table(dir.file("sweep_alpha_sine.csv"));
    CHECK(header.front() == "alpha");
    CHECK(rows.size() == 2);   // one point per machine in the roster

    CHECK_THROWS_AS(cmd_sweep(config, dir.path().string(), "gamma"), ConfigError);
}

TEST_CASE("dynamic command writes horizon rows per dataset") {
    auto j = base_config_json();
    j["tuning"]["budget"] = 6;
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    const auto artifacts = cmd_dynamic(config, dir.path().string());
    REQUIRE(artifacts.size() == 2);
    const auto steps = load_dynamic_log(dir.file("dynamic_walk.csv"));
    CHECK(steps.size() == 4);
}

TEST_CASE("tune command records configs and trial histories") {
    auto j = base_config_json();
    j["tuning"]["budget"] = 6;
    const ExperimentConfig config = parse_config(j);
    testutil::TempDir dir;
    cmd_tune(config, dir.path().string());
    const auto tuned = nlohmann::json::parse(read_text_file(dir.file("tuned_configs.json")));
    CHECK(tuned.contains("sine"));
    CHECK(tuned.at("sine").contains("dpe"));
    const TrialMemory trials = import_trials_csv(dir.file("trials/sine_dpe.csv"));
    CHECK(trials.size() == 6);
}

TEST_CASE("report rebuilds comparisons from a metric matrix on disk") {
    const ExperimentConfig config = parse_config(base_config_json());
    testutil::TempDir dir;
    // eight datasets, three models, reference always best
    std::string csv = "dataset,dpe,knn,ridge\n";
    for (int d = 0; d < 8; ++d) {
        csv += "d" + std::to_string(d) + ",0.1," + format_double(0.2 + 0.001 * d) + "," +
               format_double(0.15 + 0.002 * d) + "\n";
    }
    write_text_file(dir.file("metrics_rmse.csv"), csv);
    const auto artifacts = cmd_report(config, dir.path().string());
    REQUIRE(artifacts.size() == 1);
    const auto comparison = nlohmann::json::parse(read_text_file(dir.file("comparison_rmse.json")));
    CHECK(comparison.at("reference") == "dpe");
    CHECK(comparison.at("average_ranks").at("dpe").get<double>() == 1.0);
    CHECK(comparison.at("p_values").at("knn").get<double>() == Approx(0.0078125));
}

TEST_CASE("exceptions map onto the documented exit codes") {
    CHECK(exit_code_for(ConfigError("bad")) == 1);
    CHECK(exit_code_for(DataError("bad")) == 2);
    CHECK(exit_code_for(StateError("bad")) == 3);
    CHECK(exit_code_for(std::runtime_error("bad")) == 3);
}
