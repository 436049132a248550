#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpe/common.hpp"
#include "dpe/csv.hpp"
#include "dpe/hpo.hpp"
#include "dpe/machines.hpp"

namespace dpe {

/// One dataset entry. `source` is "csv", "synthetic_sinusoid" or
/// "synthetic_random_walk"; the synthetic sources carry their own seed so the
/// data is part of the config identity, independent of the run seed.
struct DatasetConfig {
    std::string name;
    std::string source = "csv";
    std::string path;
    std::string timestamp_column = "timestamp";
    std::vector<std::string> feature_columns;
    std::size_t length = 400;       // synthetic sources
    std::uint64_t data_seed = 1;    // synthetic sources
    double noise = 0.02;            // synthetic_sinusoid only
};

struct PreprocessConfig {
    std::size_t window = 8;
    double val_frac = 0.1;
    double test_frac = 0.1;
    // absent: cumsum every feature column; present: exactly the listed ones
    std::optional<std::vector<std::string>> cumsum_columns;
    bool drop_missing = true;
};

struct MachineConfig {
    std::string name;                      // unique instance name in reports
    std::string type;                      // registry key; defaults to name
    ParamMap params;
    std::optional<SearchSpace> tune_space; // optional per-machine tuning
};

struct TuningConfig {
    std::string method = "tpe";
    int budget = 40;
    GridResolution grid_resolution = {{"epsilon", 10}, {"partition_fraction", 5}};
    TpeConfig tpe;
    std::size_t grid_cap = 100000;
};

struct EvaluationConfig {
    std::string metrics_space = "raw";   // "raw" or "scaled"
    std::string reference_model = "dpe";
};

struct SweepSection {
    std::string variant = "dpe";
    std::vector<double> alphas;     // empty: one point per machine count
    std::vector<double> epsilons;   // empty: ten log-spaced points in [0.001, 0.01]
};

struct DynamicSection {
    std::string variant = "dpe";
    int horizon = 10;
    int refit_every = 0;
};

struct ExperimentConfig {
    int config_version = 1;
    std::uint64_t seed = 42;
    std::vector<DatasetConfig> datasets;
    PreprocessConfig preprocessing;
    std::vector<MachineConfig> machines;
    std::vector<std::string> ensembles = {"dpe", "padpe", "cobra"};
    TuningConfig tuning;
    EvaluationConfig evaluation;
    SweepSection sweep;
    DynamicSection dynamic;

    std::vector<MachineSpec> roster() const {
        std::vector<MachineSpec> specs;
        specs.reserve(machines.size());
        for (const MachineConfig& m : machines) {
            specs.push_back({m.type, m.params});
        }
        return specs;
    }
};

// ---------------------------------------------------------------------------
// JSON parsing
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config key '" + key + "': " + e.what());
    }
}

inline ParamValue param_value_from_json(const nlohmann::json& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw ConfigError("parameter values must be numbers or strings");
}

inline Dimension dimension_from_json(const std::string& name, const nlohmann::json& j) {
    const std::string kind = get_or<std::string>(j, "kind", "uniform");
    Dimension d;
    if (kind == "uniform") {
        d = Dimension::uniform(name, j.at("low").get<double>(), j.at("high").get<double>());
    } else if (kind == "loguniform") {
        d = Dimension::log_uniform(name, j.at("low").get<double>(), j.at("high").get<double>());
    } else if (kind == "choice") {
        std::vector<ParamValue> options;
        for (const auto& o : j.at("options")) {
            options.push_back(param_value_from_json(o));
        }
        d = Dimension::choice(name, std::move(options));
    } else if (kind == "quantized") {
        d = Dimension::quantized(name, j.at("low").get<double>(), j.at("high").get<double>(),
                                 j.at("step").get<double>());
    } else {
        throw ConfigError("unknown dimension kind '" + kind + "' for '" + name + "'");
    }
    if (j.contains("when")) {
        d.condition = {j.at("when").at("param").get<std::string>(),
                       param_value_from_json(j.at("when").at("equals"))};
    }
    return d;
}

inline SearchSpace search_space_from_json(const nlohmann::json& j) {
    SearchSpace space;
    for (const auto& [name, spec] : j.items()) {
        space.dims.push_back(dimension_from_json(name, spec));
    }
    space.validate();
    return space;
}

inline ParamMap params_from_json(const nlohmann::json& j) {
    ParamMap params;
    for (const auto& [key, value] : j.items()) {
        if (!value.is_number()) {
            throw ConfigError("machine parameter '" + key + "' must be numeric");
        }
        params[key] = value.get<double>();
    }
    return params;
}

} // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
    ExperimentConfig config;
    config.config_version = detail::get_or<int>(j, "config_version", 1);
    if (config.config_version != 1) {
        throw ConfigError("unsupported config_version " + std::to_string(config.config_version));
    }
    config.seed = detail::get_or<std::uint64_t>(j, "seed", 42);

    if (!j.contains("datasets") || j.at("datasets").empty()) {
        throw ConfigError("config needs at least one dataset");
    }
    for (const auto& dj : j.at("datasets")) {
        DatasetConfig d;
        d.name = dj.at("name").get<std::string>();
        d.source = detail::get_or<std::string>(dj, "source", "csv");
        d.path = detail::get_or<std::string>(dj, "path", "");
        d.timestamp_column = detail::get_or<std::string>(dj, "timestamp_column", "timestamp");
        d.feature_columns =
            detail::get_or<std::vector<std::string>>(dj, "feature_columns", {});
        d.length = detail::get_or<std::size_t>(dj, "length", 400);
        d.data_seed = detail::get_or<std::uint64_t>(dj, "data_seed", 1);
        d.noise = detail::get_or<double>(dj, "noise", 0.02);
        if (d.source == "csv") {
            if (d.path.empty()) throw ConfigError("dataset '" + d.name + "' needs a path");
            if (d.feature_columns.empty()) {
                throw ConfigError("dataset '" + d.name + "' needs feature_columns");
            }
        } else if (d.source != "synthetic_sinusoid" && d.source != "synthetic_random_walk") {
            throw ConfigError("dataset '" + d.name + "': unknown source '" + d.source + "'");
        }
        config.datasets.push_back(std::move(d));
    }

    if (j.contains("preprocessing")) {
        const auto& pj = j.at("preprocessing");
        config.preprocessing.window = detail::get_or<std::size_t>(pj, "window", 8);
        config.preprocessing.val_frac = detail::get_or<double>(pj, "val_frac", 0.1);
        config.preprocessing.test_frac = detail::get_or<double>(pj, "test_frac", 0.1);
        config.preprocessing.drop_missing = detail::get_or<bool>(pj, "drop_missing", true);
        if (pj.contains("cumsum_columns")) {
            config.preprocessing.cumsum_columns =
                pj.at("cumsum_columns").get<std::vector<std::string>>();
        }
        if (config.preprocessing.window < 1) throw ConfigError("window must be >= 1");
    }

    if (!j.contains("machines") || j.at("machines").empty()) {
        throw ConfigError("config needs at least one machine");
    }
    for (const auto& mj : j.at("machines")) {
        MachineConfig m;
        m.name = mj.at("name").get<std::string>();
        m.type = detail::get_or<std::string>(mj, "type", m.name);
        if (mj.contains("params")) m.params = detail::params_from_json(mj.at("params"));
        if (mj.contains("tune")) m.tune_space = detail::search_space_from_json(mj.at("tune"));
        for (const auto& other : config.machines) {
            if (other.name == m.name) {
                throw ConfigError("duplicate machine name '" + m.name + "'");
            }
        }
        config.machines.push_back(std::move(m));
    }

    if (j.contains("ensembles")) {
        config.ensembles = j.at("ensembles").get<std::vector<std::string>>();
        for (const auto& e : config.ensembles) {
            variant_from_name(e);   // validates
        }
    }

    if (j.contains("tuning")) {
        const auto& tj = j.at("tuning");
        config.tuning.method = detail::get_or<std::string>(tj, "method", "tpe");
        tune_method_from_name(config.tuning.method);
        config.tuning.budget = detail::get_or<int>(tj, "budget", 40);
        if (config.tuning.budget < 1) throw ConfigError("tuning budget must be >= 1");
        if (tj.contains("grid_resolution")) {
            config.tuning.grid_resolution.clear();
            for (const auto& [key, value] : tj.at("grid_resolution").items()) {
                config.tuning.grid_resolution[key] = value.get<int>();
            }
        }
        if (tj.contains("tpe")) {
            const auto& pj = tj.at("tpe");
            config.tuning.tpe.gamma = detail::get_or<double>(pj, "gamma", 0.25);
            config.tuning.tpe.n_candidates = detail::get_or<int>(pj, "n_candidates", 24);
            config.tuning.tpe.n_startup = detail::get_or<int>(pj, "n_startup", 10);
        }
        config.tuning.grid_cap = detail::get_or<std::size_t>(tj, "grid_cap", 100000);
    }

    if (j.contains("evaluation")) {
        const auto& ej = j.at("evaluation");
        config.evaluation.metrics_space = detail::get_or<std::string>(ej, "metrics_space", "raw");
        if (config.evaluation.metrics_space != "raw" &&
            config.evaluation.metrics_space != "scaled") {
            throw ConfigError("metrics_space must be 'raw' or 'scaled'");
        }
        config.evaluation.reference_model =
            detail::get_or<std::string>(ej, "reference_model", "dpe");
    }

    if (j.contains("sweep")) {
        const auto& sj = j.at("sweep");
        config.sweep.variant = detail::get_or<std::string>(sj, "variant", "dpe");
        variant_from_name(config.sweep.variant);
        config.sweep.alphas = detail::get_or<std::vector<double>>(sj, "alphas", {});
        config.sweep.epsilons = detail::get_or<std::vector<double>>(sj, "epsilons", {});
    }

    if (j.contains("dynamic")) {
        const auto& dj = j.at("dynamic");
        config.dynamic.variant = detail::get_or<std::string>(dj, "variant", "dpe");
        variant_from_name(config.dynamic.variant);
        config.dynamic.horizon = detail::get_or<int>(dj, "horizon", 10);
        config.dynamic.refit_every = detail::get_or<int>(dj, "refit_every", 0);
        if (config.dynamic.horizon < 1) throw ConfigError("dynamic horizon must be >= 1");
    }

    return config;
}

inline ExperimentConfig load_config(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse config '" + path + "': " + e.what());
    }
    return parse_config(j);
}

// ---------------------------------------------------------------------------
// Canonical serialization and hashing
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json dataset_to_json(const DatasetConfig& d) {
    nlohmann::json j = {{"name", d.name},
                        {"source", d.source},
                        {"timestamp_column", d.timestamp_column},
                        {"feature_columns", d.feature_columns}};
    if (d.source == "csv") {
        j["path"] = d.path;
    } else {
        j["length"] = d.length;
        j["data_seed"] = d.data_seed;
        if (d.source == "synthetic_sinusoid") j["noise"] = d.noise;
    }
    return j;
}

inline nlohmann::json preprocessing_to_json(const PreprocessConfig& p) {
    nlohmann::json j = {{"window", p.window},
                        {"val_frac", p.val_frac},
                        {"test_frac", p.test_frac},
                        {"drop_missing", p.drop_missing}};
    if (p.cumsum_columns) j["cumsum_columns"] = *p.cumsum_columns;
    return j;
}

inline nlohmann::json dimension_to_json(const Dimension& d) {
    nlohmann::json j;
    switch (d.kind) {
        case Dimension::Kind::Uniform:
            j = {{"kind", "uniform"}, {"low", d.lo}, {"high", d.hi}};
            break;
        case Dimension::Kind::LogUniform:
            j = {{"kind", "loguniform"}, {"low", d.lo}, {"high", d.hi}};
            break;
        case Dimension::Kind::Quantized:
            j = {{"kind", "quantized"}, {"low", d.lo}, {"high", d.hi}, {"step", d.step}};
            break;
        case Dimension::Kind::Choice: {
            nlohmann::json options = nlohmann::json::array();
            for (const auto& o : d.choices) {
                if (const double* num = std::get_if<double>(&o)) {
                    options.push_back(*num);
                } else {
                    options.push_back(std::get<std::string>(o));
                }
            }
            j = {{"kind", "choice"}, {"options", options}};
            break;
        }
    }
    if (d.condition) {
        nlohmann::json when = {{"param", d.condition->first}};
        if (const double* num = std::get_if<double>(&d.condition->second)) {
            when["equals"] = *num;
        } else {
            when["equals"] = std::get<std::string>(d.condition->second);
        }
        j["when"] = when;
    }
    return j;
}

} // namespace detail

/// Canonical JSON covering every field that can change any output; nlohmann
/// objects keep keys sorted, so the dump is stable.
inline nlohmann::json config_to_json(const ExperimentConfig& config) {
    nlohmann::json j;
    j["config_version"] = config.config_version;
    j["seed"] = config.seed;
    j["datasets"] = nlohmann::json::array();
    for (const auto& d : config.datasets) {
        j["datasets"].push_back(detail::dataset_to_json(d));
    }
    j["preprocessing"] = detail::preprocessing_to_json(config.preprocessing);
    j["machines"] = nlohmann::json::array();
    for (const auto& m : config.machines) {
        nlohmann::json mj = {{"name", m.name}, {"type", m.type}, {"params", m.params}};
        if (m.tune_space) {
            nlohmann::json tune;
            for (const Dimension& d : m.tune_space->dims) {
                tune[d.name] = detail::dimension_to_json(d);
            }
            mj["tune"] = tune;
        }
        j["machines"].push_back(mj);
    }
    j["ensembles"] = config.ensembles;
    j["tuning"] = {{"method", config.tuning.method},
                   {"budget", config.tuning.budget},
                   {"grid_resolution", config.tuning.grid_resolution},
                   {"grid_cap", config.tuning.grid_cap},
                   {"tpe",
                    {{"gamma", config.tuning.tpe.gamma},
                     {"n_candidates", config.tuning.tpe.n_candidates},
                     {"n_startup", config.tuning.tpe.n_startup}}}};
    j["evaluation"] = {{"metrics_space", config.evaluation.metrics_space},
                       {"reference_model", config.evaluation.reference_model}};
    j["sweep"] = {{"variant", config.sweep.variant},
                  {"alphas", config.sweep.alphas},
                  {"epsilons", config.sweep.epsilons}};
    j["dynamic"] = {{"variant", config.dynamic.variant},
                    {"horizon", config.dynamic.horizon},
                    {"refit_every", config.dynamic.refit_every}};
    return j;
}

inline std::uint64_t config_hash(const ExperimentConfig& config) {
    return fnv1a64(config_to_json(config).dump());
}

/// Hash of the data-affecting subset only; keys the prepared-dataset cache.
inline std::uint64_t data_hash(const ExperimentConfig& config, const DatasetConfig& dataset) {
    nlohmann::json j = {{"dataset", detail::dataset_to_json(dataset)},
                        {"preprocessing", detail::preprocessing_to_json(config.preprocessing)}};
    return fnv1a64(j.dump());
}

} // namespace dpe
