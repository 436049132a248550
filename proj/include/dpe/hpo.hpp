#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "dpe/common.hpp"
#include "dpe/csv.hpp"
#include "dpe/ensemble.hpp"
#include "dpe/machines.hpp"
#include "dpe/series.hpp"

namespace dpe {

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

using ParamValue = std::variant<double, std::string>;
using Point = std::map<std::string, ParamValue>;

inline double as_number(const ParamValue& v) {
    if (const double* d = std::get_if<double>(&v)) return *d;
    throw ConfigError("expected a numeric parameter value");
}

inline std::string param_value_to_string(const ParamValue& v) {
    if (const double* d = std::get_if<double>(&v)) return format_double(*d);
    return std::get<std::string>(v);
}

/// One dimension of a search space. A dimension may be conditional on a
/// choice dimension declared before it: it only exists in points where the
/// parent took the required value (one level deep).
struct Dimension {
    enum class Kind { Uniform, LogUniform, Choice, Quantized };

    std::string name;
    Kind kind = Kind::Uniform;
    double lo = 0.0;
    double hi = 1.0;
    double step = 0.0;                       // Quantized only
    std::vector<ParamValue> choices;         // Choice only
    std::optional<std::pair<std::string, ParamValue>> condition;

    static Dimension uniform(std::string name, double lo, double hi) {
        Dimension d;
        d.name = std::move(name);
        d.kind = Kind::Uniform;
        d.lo = lo;
        d.hi = hi;
        return d;
    }
    static Dimension log_uniform(std::string name, double lo, double hi) {
        Dimension d;
        d.name = std::move(name);
        d.kind = Kind::LogUniform;
        d.lo = lo;
        d.hi = hi;
        return d;
    }
    static Dimension choice(std::string name, std::vector<ParamValue> options) {
        Dimension d;
        d.name = std::move(name);
        d.kind = Kind::Choice;
        d.choices = std::move(options);
        return d;
    }
    static Dimension quantized(std::string name, double lo, double hi, double step) {
        Dimension d;
        d.name = std::move(name);
        d.kind = Kind::Quantized;
        d.lo = lo;
        d.hi = hi;
        d.step = step;
        return d;
    }

    Dimension conditional_on(std::string parent, ParamValue value) && {
        condition = {std::move(parent), std::move(value)};
        return std::move(*this);
    }

    bool is_continuous() const { return kind != Kind::Choice; }
};

struct SearchSpace {
    std::vector<Dimension> dims;

    void validate() const {
        if (dims.empty()) {
            throw ConfigError("search space has no dimensions");
        }
        for (std::size_t i = 0; i < dims.size(); ++i) {
            const Dimension& d = dims[i];
            if (d.kind == Dimension::Kind::Choice) {
                if (d.choices.empty()) {
                    throw ConfigError("choice dimension '" + d.name + "' has no options");
                }
            } else {
                if (!(d.lo < d.hi)) {
                    throw ConfigError("dimension '" + d.name + "' needs lo < hi");
                }
                if (d.kind == Dimension::Kind::LogUniform && d.lo <= 0.0) {
                    throw ConfigError("log-uniform dimension '" + d.name + "' needs lo > 0");
                }
                if (d.kind == Dimension::Kind::Quantized && !(d.step > 0.0)) {
                    throw ConfigError("quantized dimension '" + d.name + "' needs step > 0");
                }
            }
            if (d.condition) {
                bool found = false;
                for (std::size_t j = 0; j < i; ++j) {
                    if (dims[j].name == d.condition->first) {
                        if (dims[j].kind != Dimension::Kind::Choice) {
                            throw ConfigError("condition parent '" + d.condition->first +
                                              "' is not a choice dimension");
                        }
                        found = true;
                    }
                }
                if (!found) {
                    throw ConfigError("condition parent '" + d.condition->first +
                                      "' must be declared before '" + d.name + "'");
                }
            }
        }
    }
};

struct Trial {
    Point params;
    double objective = 0.0;
};

/// The optimizer's history. Append-only; the seed makes every suggestion a
/// pure function of (seed, number of trials so far).
struct TrialMemory {
    std::vector<Trial> trials;
    std::uint64_t seed = 0;

    std::size_t size() const { return trials.size(); }
    void append(Point params, double objective) {
        if (!std::isfinite(objective)) {
            throw DataError("trial objective must be finite");
        }
        trials.push_back({std::move(params), objective});
    }
};

struct TpeConfig {
    double gamma = 0.25;        // quantile splitting good from bad trials
    int n_candidates = 24;      // samples drawn from the good density per suggestion
    int n_startup = 10;         // random trials before the model kicks in
    std::string bandwidth_rule = "range_over_count";
};

// ---------------------------------------------------------------------------
// Parzen machinery
// ---------------------------------------------------------------------------

namespace detail {

inline double to_internal(const Dimension& d, double v) {
    return d.kind == Dimension::Kind::LogUniform ? std::log(v) : v;
}
inline double from_internal(const Dimension& d, double u) {
    return d.kind == Dimension::Kind::LogUniform ? std::exp(u) : u;
}
inline double internal_lo(const Dimension& d) { return to_internal(d, d.lo); }
inline double internal_hi(const Dimension& d) { return to_internal(d, d.hi); }

inline double snap_quantized(const Dimension& d, double v) {
    const double k = std::round((v - d.lo) / d.step);
    return std::clamp(d.lo + k * d.step, d.lo, d.hi);
}

inline double prior_density(const Dimension& d) {
    return 1.0 / (internal_hi(d) - internal_lo(d));
}

inline double normal_pdf(double x, double mu, double sigma) {
    static const double inv_sqrt_2pi = 0.3989422804014327;
    const double z = (x - mu) / sigma;
    return inv_sqrt_2pi / sigma * std::exp(-0.5 * z * z);
}

inline double bandwidth(const Dimension& d, std::size_t set_size,
                        const TpeConfig& /*config*/) {
    const double range = internal_hi(d) - internal_lo(d);
    return std::max(range / static_cast<double>(set_size), 1e-3);
}

/// Parzen mixture density for a continuous dimension, in internal space.
/// Empty sets degrade to the prior; single points mix the prior and the
/// point's kernel half and half.
inline double continuous_density(const Dimension& d, const std::vector<double>& centers,
                                 double u, const TpeConfig& config) {
    if (centers.empty()) {
        return prior_density(d);
    }
    const double bw = bandwidth(d, centers.size(), config);
    if (centers.size() == 1) {
        return 0.5 * prior_density(d) + 0.5 * normal_pdf(u, centers[0], bw);
    }
    double sum = 0.0;
    for (double c : centers) {
        sum += normal_pdf(u, c, bw);
    }
    return sum / static_cast<double>(centers.size());
}

/// Add-one-smoothed categorical weight; the empty set reduces to the uniform
/// prior automatically.
inline double categorical_probability(const Dimension& d,
                                      const std::vector<std::size_t>& counts,
                                      std::size_t total, std::size_t option) {
    return (static_cast<double>(counts[option]) + 1.0) /
           (static_cast<double>(total) + static_cast<double>(d.choices.size()));
}

inline std::size_t choice_index(const Dimension& d, const ParamValue& v) {
    for (std::size_t i = 0; i < d.choices.size(); ++i) {
        if (d.choices[i] == v) return i;
    }
    throw ConfigError("value not among options of choice dimension '" + d.name + "'");
}

inline double sample_uniform(std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return dist(rng);
}

inline ParamValue sample_prior(const Dimension& d, std::mt19937_64& rng) {
    switch (d.kind) {
        case Dimension::Kind::Choice: {
            std::uniform_int_distribution<std::size_t> dist(0, d.choices.size() - 1);
            return d.choices[dist(rng)];
        }
        case Dimension::Kind::Uniform:
            return sample_uniform(rng, d.lo, d.hi);
        case Dimension::Kind::LogUniform:
            return std::exp(sample_uniform(rng, std::log(d.lo), std::log(d.hi)));
        case Dimension::Kind::Quantized:
            return snap_quantized(d, sample_uniform(rng, d.lo, d.hi));
    }
    throw ConfigError("unreachable dimension kind");
}

inline bool dimension_active(const Dimension& d, const Point& point) {
    if (!d.condition) return true;
    auto it = point.find(d.condition->first);
    return it != point.end() && it->second == d.condition->second;
}

struct DimensionModel {
    std::vector<double> centers;            // continuous, internal space
    std::vector<std::size_t> counts;        // categorical
    std::size_t total = 0;

    static DimensionModel build(const Dimension& d, const std::vector<const Trial*>& set) {
        DimensionModel m;
        if (d.kind == Dimension::Kind::Choice) {
            m.counts.assign(d.choices.size(), 0);
        }
        for (const Trial* t : set) {
            auto it = t->params.find(d.name);
            if (it == t->params.end()) continue;
            if (d.kind == Dimension::Kind::Choice) {
                ++m.counts[choice_index(d, it->second)];
                ++m.total;
            } else {
                m.centers.push_back(to_internal(d, as_number(it->second)));
                ++m.total;
            }
        }
        return m;
    }

    double density(const Dimension& d, const ParamValue& v, const TpeConfig& config) const {
        if (d.kind == Dimension::Kind::Choice) {
            return categorical_probability(d, counts, total, choice_index(d, v));
        }
        return continuous_density(d, centers, to_internal(d, as_number(v)), config);
    }

    ParamValue sample(const Dimension& d, const TpeConfig& config, std::mt19937_64& rng) const {
        if (d.kind == Dimension::Kind::Choice) {
            std::vector<double> w(d.choices.size());
            for (std::size_t i = 0; i < w.size(); ++i) {
                w[i] = categorical_probability(d, counts, total, i);
            }
            std::discrete_distribution<std::size_t> dist(w.begin(), w.end());
            return d.choices[dist(rng)];
        }
        if (centers.empty()) {
            return sample_prior(d, rng);
        }
        if (centers.size() == 1 && std::bernoulli_distribution(0.5)(rng)) {
            return sample_prior(d, rng);
        }
        std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
        const double mu = centers[pick(rng)];
        const double bw = bandwidth(d, centers.size(), config);
        std::normal_distribution<double> kernel(mu, bw);
        double u = kernel(rng);
        for (int tries = 0; tries < 64 && (u < internal_lo(d) || u > internal_hi(d)); ++tries) {
            u = kernel(rng);
        }
        u = std::clamp(u, internal_lo(d), internal_hi(d));
        double v = from_internal(d, u);
        if (d.kind == Dimension::Kind::Quantized) {
            v = snap_quantized(d, v);
        }
        return v;
    }
};

} // namespace detail

// ---------------------------------------------------------------------------
// Suggestion and optimization
// ---------------------------------------------------------------------------

/// Draws a point from the prior, respecting conditional activation.
inline Point sample_prior_point(const SearchSpace& space, std::mt19937_64& rng) {
    Point point;
    for (const Dimension& d : space.dims) {
        if (detail::dimension_active(d, point)) {
            point[d.name] = detail::sample_prior(d, rng);
        }
    }
    return point;
}

/// One TPE suggestion. Before `n_startup` trials exist the prior is sampled
/// directly; afterwards the memory is split at the gamma quantile into good
/// and bad sets, per-dimension Parzen densities l and g are fitted, and the
/// best of `n_candidates` draws from l under the score l/g is returned.
/// Deterministic given (memory.seed, memory.size()).
inline Point suggest(const TrialMemory& memory, const SearchSpace& space, const TpeConfig& config) {
    space.validate();
    std::mt19937_64 rng(derive_seed(memory.seed, memory.size(), 0x7e5u));
    if (memory.size() < static_cast<std::size_t>(config.n_startup)) {
        return sample_prior_point(space, rng);
    }

    std::vector<const Trial*> sorted;
    sorted.reserve(memory.size());
    for (const Trial& t : memory.trials) sorted.push_back(&t);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const Trial* a, const Trial* b) { return a->objective < b->objective; });
    const std::size_t n_good = std::max<std::size_t>(
        1, static_cast<std::size_t>(
               std::ceil(config.gamma * static_cast<double>(sorted.size()))));
    std::vector<const Trial*> good(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(n_good));
    std::vector<const Trial*> bad(sorted.begin() + static_cast<std::ptrdiff_t>(n_good), sorted.end());

    std::map<std::string, detail::DimensionModel> l_models, g_models;
    for (const Dimension& d : space.dims) {
        l_models.emplace(d.name, detail::DimensionModel::build(d, good));
        g_models.emplace(d.name, detail::DimensionModel::build(d, bad));
    }

    Point best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < config.n_candidates; ++c) {
        Point candidate;
        for (const Dimension& d : space.dims) {
            if (detail::dimension_active(d, candidate)) {
                candidate[d.name] = l_models.at(d.name).sample(d, config, rng);
            }
        }
        double score = 0.0;
        for (const Dimension& d : space.dims) {
            auto it = candidate.find(d.name);
            if (it == candidate.end()) continue;
            const double l = l_models.at(d.name).density(d, it->second, config);
            const double g = g_models.at(d.name).density(d, it->second, config);
            score += std::log(std::max(l, 1e-300)) - std::log(std::max(g, 1e-300));
        }
        if (score > best_score) {
            best_score = score;
            best = std::move(candidate);
        }
    }
    return best;
}

using Objective = std::function<double(const Point&)>;

struct OptimizeResult {
    Point best_point;
    double best_value = std::numeric_limits<double>::infinity();
    TrialMemory memory;
};

namespace detail {

/// Crashed or non-finite trials are recorded at the worst observed objective
/// plus a tenth of the observed range (1.0 when there is no history), so the
/// loop stays total without the failure looking attractive.
inline double failure_value(const TrialMemory& memory) {
    if (memory.trials.empty()) return 1.0;
    double worst = memory.trials.front().objective;
    double best = worst;
    for (const Trial& t : memory.trials) {
        worst = std::max(worst, t.objective);
        best = std::min(best, t.objective);
    }
    return worst + 0.1 * (worst - best);
}

inline void record_outcome(TrialMemory& memory, Point point, const Objective& objective) {
    double value;
    try {
        value = objective(point);
        if (!std::isfinite(value)) {
            value = failure_value(memory);
        }
    } catch (...) {
        value = failure_value(memory);
    }
    memory.append(std::move(point), value);
}

inline void collect_best(const TrialMemory& memory, OptimizeResult& out) {
    for (const Trial& t : memory.trials) {
        if (t.objective < out.best_value) {
            out.best_value = t.objective;
            out.best_point = t.params;
        }
    }
}

} // namespace detail

/// Sequential model-based minimization: exactly `budget` new trials are run
/// and appended (after the optional warm start), and the best recorded trial
/// is returned. Reproducible given the seed.
inline OptimizeResult optimize(const Objective& objective, const SearchSpace& space, int budget,
                               const TpeConfig& config, std::uint64_t seed,
                               const TrialMemory* warm_start = nullptr) {
    if (budget < 1) {
        throw ConfigError("optimize: budget must be at least 1");
    }
    space.validate();
    OptimizeResult result;
    result.memory.seed = seed;
    if (warm_start) {
        result.memory.trials = warm_start->trials;
    }
    for (int i = 0; i < budget; ++i) {
        Point point = suggest(result.memory, space, config);
        detail::record_outcome(result.memory, std::move(point), objective);
    }
    detail::collect_best(result.memory, result);
    return result;
}

/// Seeded random-search baseline with the same recording rules as optimize().
inline OptimizeResult random_search(const Objective& objective, const SearchSpace& space,
                                    int budget, std::uint64_t seed) {
    if (budget < 1) {
        throw ConfigError("random_search: budget must be at least 1");
    }
    space.validate();
    OptimizeResult result;
    result.memory.seed = seed;
    for (int i = 0; i < budget; ++i) {
        std::mt19937_64 rng(derive_seed(seed, result.memory.size(), 0x7e5u));
        detail::record_outcome(result.memory, sample_prior_point(space, rng), objective);
    }
    detail::collect_best(result.memory, result);
    return result;
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

using GridResolution = std::map<std::string, int>;

namespace detail {

inline std::vector<ParamValue> grid_values(const Dimension& d, const GridResolution& resolution) {
    std::vector<ParamValue> values;
    switch (d.kind) {
        case Dimension::Kind::Choice:
            return d.choices;
        case Dimension::Kind::Quantized: {
            for (double v = d.lo; v <= d.hi + 1e-12; v += d.step) {
                values.push_back(snap_quantized(d, v));
            }
            return values;
        }
        case Dimension::Kind::Uniform:
        case Dimension::Kind::LogUniform: {
            auto it = resolution.find(d.name);
            const int k = it == resolution.end() ? 10 : it->second;
            if (k < 1) {
                throw ConfigError("grid resolution for '" + d.name + "' must be >= 1");
            }
            if (k == 1) {
                values.push_back(from_internal(d, 0.5 * (internal_lo(d) + internal_hi(d))));
                return values;
            }
            const double lo = internal_lo(d);
            const double hi = internal_hi(d);
            for (int i = 0; i < k; ++i) {
                const double u = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(k - 1);
                values.push_back(from_internal(d, u));
            }
            return values;
        }
    }
    throw ConfigError("unreachable dimension kind");
}

} // namespace detail

/// Total number of grid points before conditional pruning; this is the value
/// checked against the cap and against budget-parity rules.
inline std::size_t grid_size(const SearchSpace& space, const GridResolution& resolution) {
    space.validate();
    std::size_t total = 1;
    for (const Dimension& d : space.dims) {
        total *= detail::grid_values(d, resolution).size();
    }
    return total;
}

/// Exhaustive evaluation in deterministic lexicographic order (declaration
/// order of dimensions, ascending values). Ties keep the first-visited point.
inline OptimizeResult grid_search(const Objective& objective, const SearchSpace& space,
                                  const GridResolution& resolution,
                                  std::size_t cap = 100000) {
    const std::size_t total = grid_size(space, resolution);
    if (total > cap) {
        throw ConfigError("grid of " + std::to_string(total) + " points exceeds cap of " +
                          std::to_string(cap));
    }
    std::vector<std::vector<ParamValue>> values;
    values.reserve(space.dims.size());
    for (const Dimension& d : space.dims) {
        values.push_back(detail::grid_values(d, resolution));
    }

    OptimizeResult result;
    Point point;
    auto visit = [&](auto&& self, std::size_t depth) -> void {
        if (depth == space.dims.size()) {
            detail::record_outcome(result.memory, point, objective);
            return;
        }
        const Dimension& d = space.dims[depth];
        if (!detail::dimension_active(d, point)) {
            self(self, depth + 1);
            return;
        }
        for (const ParamValue& v : values[depth]) {
            point[d.name] = v;
            self(self, depth + 1);
        }
        point.erase(d.name);
    };
    visit(visit, 0);
    detail::collect_best(result.memory, result);
    return result;
}

// ---------------------------------------------------------------------------
// Trial memory CSV round trip
// ---------------------------------------------------------------------------

inline void export_trials_csv(const std::string& path, const TrialMemory& memory) {
    std::string out = "trial,params,objective\n";
    for (std::size_t i = 0; i < memory.trials.size(); ++i) {
        std::string params;
        for (const auto& [k, v] : memory.trials[i].params) {
            if (!params.empty()) params += ';';
            params += k + "=" + param_value_to_string(v);
        }
        out += std::to_string(i) + "," + csv_quote_if_needed(params) + "," +
               format_double(memory.trials[i].objective) + "\n";
    }
    write_text_file(path, out);
}

inline TrialMemory import_trials_csv(const std::string& path, std::uint64_t seed = 0) {
    const auto [header, rows] = read_csv_table(path);
    if (header != std::vector<std::string>{"trial", "params", "objective"}) {
        throw DataError("unexpected trial CSV header in '" + path + "'");
    }
    TrialMemory memory;
    memory.seed = seed;
    for (const auto& row : rows) {
        if (row.size() != 3) {
            throw DataError("malformed trial row in '" + path + "'");
        }
        Point point;
        const std::string& params = row[1];
        std::size_t start = 0;
        while (start < params.size()) {
            std::size_t stop = params.find(';', start);
            if (stop == std::string::npos) stop = params.size();
            const std::string item = params.substr(start, stop - start);
            const std::size_t eq = item.find('=');
            if (eq == std::string::npos) {
                throw DataError("malformed key=value pair '" + item + "' in '" + path + "'");
            }
            const std::string key = item.substr(0, eq);
            const std::string value = item.substr(eq + 1);
            if (auto num = detail::parse_double(value)) {
                point[key] = *num;
            } else {
                point[key] = value;
            }
            start = stop + 1;
        }
        auto objective = detail::parse_double(row[2]);
        if (!objective) {
            throw DataError("non-numeric objective in '" + path + "'");
        }
        memory.append(std::move(point), *objective);
    }
    return memory;
}

// ---------------------------------------------------------------------------
// Ensemble and machine tuning
// ---------------------------------------------------------------------------

enum class TuneMethod { Tpe, Grid };

inline TuneMethod tune_method_from_name(const std::string& name) {
    if (name == "tpe" || name == "boa") return TuneMethod::Tpe;
    if (name == "grid") return TuneMethod::Grid;
    throw ConfigError("unknown tuning method '" + name + "'");
}

struct TuneOptions {
    TuneMethod method = TuneMethod::Tpe;
    int budget = 60;                       // TPE trials
    GridResolution grid_resolution = {{"epsilon", 10}, {"partition_fraction", 5}};
    TpeConfig tpe;
    std::uint64_t seed = 0;
    std::size_t grid_cap = 100000;
};

/// Validation-set evaluator for ensemble configs. Machine fits and cached
/// prediction tensors are memoized per partition point, so DPE tuning fits
/// the bank exactly once and the partitioned variants refit only when the
/// suggested fraction moves the split.
class EnsembleEvaluator {
public:
    struct Eval {
        double mse = 0.0;
        double mean_qualified = 0.0;
        double fallback_rate = 0.0;
    };

    EnsembleEvaluator(const FrameDataset& dataset, std::vector<MachineSpec> roster,
                      EnsembleVariant variant, std::uint64_t seed)
        : dataset_(dataset), roster_(std::move(roster)), variant_(variant), seed_(seed) {
        if (dataset.n_val == 0) {
            throw DataError("ensemble tuning needs a non-empty validation split");
        }
    }

    std::size_t machine_count() const { return roster_.size(); }
    EnsembleVariant variant() const { return variant_; }

    Eval evaluate(const EnsembleConfig& config) {
        Cached& cache = for_partition(config);
        const auto queries = dataset_.validation();
        double se = 0.0;
        double qualified = 0.0;
        int fallbacks = 0;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const WeightVector w = consensus_weights(cache.prox, cache.val_query_preds[i], config);
            const Eigen::VectorXd pred = aggregate(cache.prox, w, cache.val_query_preds[i]);
            se += (pred - queries[i].target).squaredNorm();
            qualified += w.qualified_count;
            if (w.fallback) ++fallbacks;
        }
        const double denom = static_cast<double>(queries.size()) *
                             static_cast<double>(cache.prox.output_dim());
        Eval out;
        out.mse = se / denom;
        out.mean_qualified = qualified / static_cast<double>(queries.size());
        out.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(queries.size());
        return out;
    }

private:
    struct Cached {
        MachineBank bank;
        ProximitySet prox;
        std::vector<Eigen::MatrixXd> val_query_preds;
    };

    Cached& for_partition(const EnsembleConfig& config) {
        const std::size_t key =
            variant_ == EnsembleVariant::DPE
                ? dataset_.n_train
                : partition_point(dataset_.n_train, config.partition_fraction);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;

        Cached cached;
        cached.bank = MachineBank(roster_);
        fit_bank(cached.bank, dataset_, config, seed_);
        cached.prox = build_proximity_set(cached.bank, dataset_, config, ProximityPhase::Tune);
        cached.val_query_preds.reserve(dataset_.n_val);
        for (const FramePair& p : dataset_.validation()) {
            cached.val_query_preds.push_back(cached.bank.predict_query(p.frame));
        }
        return cache_.emplace(key, std::move(cached)).first->second;
    }

    const FrameDataset& dataset_;
    std::vector<MachineSpec> roster_;
    EnsembleVariant variant_;
    std::uint64_t seed_;
    std::map<std::size_t, Cached> cache_;
};

/// The tuning ranges: epsilon in (0,1) for every variant, alpha over the
/// consensus fractions {1/M .. 1} for DPE and PaDPE, and the partition
/// fraction in (0,1) for the partitioned variants. COBRA pins alpha at 1.
inline SearchSpace ensemble_search_space(EnsembleVariant variant, std::size_t machine_count) {
    SearchSpace space;
    space.dims.push_back(Dimension::uniform("epsilon", 1e-6, 1.0));
    if (variant != EnsembleVariant::COBRA) {
        std::vector<ParamValue> alphas;
        for (std::size_t i = 1; i <= machine_count; ++i) {
            alphas.push_back(static_cast<double>(i) / static_cast<double>(machine_count));
        }
        space.dims.push_back(Dimension::choice("alpha", std::move(alphas)));
    }
    if (variant != EnsembleVariant::DPE) {
        space.dims.push_back(Dimension::uniform("partition_fraction", 1e-6, 1.0 - 1e-6));
    }
    return space;
}

inline EnsembleConfig ensemble_config_from_point(const Point& point, EnsembleVariant variant) {
    EnsembleConfig config;
    config.variant = variant;
    config.epsilon = as_number(point.at("epsilon"));
    config.alpha = variant == EnsembleVariant::COBRA ? 1.0 : as_number(point.at("alpha"));
    if (variant != EnsembleVariant::DPE) {
        config.partition_fraction = as_number(point.at("partition_fraction"));
    }
    return config;
}

struct TuneResult {
    EnsembleConfig config;
    double validation_mse = 0.0;
    TrialMemory trials;
};

/// Tunes the ensemble parameters on validation MSE with either TPE or the
/// exhaustive grid baseline and returns the winning config.
inline TuneResult tune_ensemble(const FrameDataset& dataset, const std::vector<MachineSpec>& roster,
                                EnsembleVariant variant, const TuneOptions& options) {
    EnsembleEvaluator evaluator(dataset, roster, variant, options.seed);
    const SearchSpace space = ensemble_search_space(variant, roster.size());
    const Objective objective = [&](const Point& point) {
        return evaluator.evaluate(ensemble_config_from_point(point, variant)).mse;
    };
    OptimizeResult opt;
    if (options.method == TuneMethod::Tpe) {
        opt = optimize(objective, space, options.budget, options.tpe, options.seed);
    } else {
        opt = grid_search(objective, space, options.grid_resolution, options.grid_cap);
    }
    TuneResult result;
    result.config = ensemble_config_from_point(opt.best_point, variant);
    result.validation_mse = opt.best_value;
    result.trials = std::move(opt.memory);
    return result;
}

struct MachineTuneResult {
    ParamMap params;
    double validation_mse = 0.0;
    TrialMemory trials;
};

/// Per-machine hyperparameter tuning on validation MSE. Dimensions must be
/// numeric; the winning values are merged over the roster entry's fixed
/// params.
inline MachineTuneResult tune_machine(const FrameDataset& dataset, const MachineSpec& spec,
                                      const SearchSpace& space, const TuneOptions& options) {
    if (dataset.n_val == 0) {
        throw DataError("machine tuning needs a non-empty validation split");
    }
    const Objective objective = [&](const Point& point) {
        ParamMap params = spec.params;
        for (const auto& [k, v] : point) {
            params[k] = as_number(v);
        }
        auto machine = make_machine(spec.name, params);
        machine->fit(dataset.train(), options.seed);
        double se = 0.0;
        for (const FramePair& p : dataset.validation()) {
            se += (machine->predict(p.frame) - p.target).squaredNorm();
        }
        return se / (static_cast<double>(dataset.n_val) *
                     static_cast<double>(dataset.validation().front().target.size()));
    };
    OptimizeResult opt;
    if (options.method == TuneMethod::Tpe) {
        opt = optimize(objective, space, options.budget, options.tpe, options.seed);
    } else {
        opt = grid_search(objective, space, options.grid_resolution, options.grid_cap);
    }
    MachineTuneResult result;
    result.params = spec.params;
    for (const auto& [k, v] : opt.best_point) {
        result.params[k] = as_number(v);
    }
    result.validation_mse = opt.best_value;
    result.trials = std::move(opt.memory);
    return result;
}

} // namespace dpe
