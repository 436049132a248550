#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpe/common.hpp"
#include "dpe/csv.hpp"
#include "dpe/machines.hpp"
#include "dpe/series.hpp"

namespace dpe {

enum class EnsembleVariant { DPE, PaDPE, COBRA };

inline std::string variant_name(EnsembleVariant v) {
    switch (v) {
        case EnsembleVariant::DPE: return "dpe";
        case EnsembleVariant::PaDPE: return "padpe";
        case EnsembleVariant::COBRA: return "cobra";
    }
    return "?";
}

inline EnsembleVariant variant_from_name(const std::string& name) {
    if (name == "dpe" || name == "DPE") return EnsembleVariant::DPE;
    if (name == "padpe" || name == "PaDPE") return EnsembleVariant::PaDPE;
    if (name == "cobra" || name == "COBRA") return EnsembleVariant::COBRA;
    throw ConfigError("unknown ensemble variant '" + name + "'");
}

/// Aggregation parameters. `epsilon` is the distance threshold in machine
/// prediction space; `alpha` the minimum fraction of machines that must agree
/// a proximity point is close; `partition_fraction` is the share of the
/// training split the partitioned variants fit their machines on. The COBRA
/// variant ignores `alpha` and demands unanimous agreement.
struct EnsembleConfig {
    double epsilon = 0.1;
    double alpha = 1.0;
    EnsembleVariant variant = EnsembleVariant::DPE;
    double partition_fraction = 0.5;
};

/// Which split a proximity entry came from.
enum class SplitTag { Train, TrainHoldout, Validation };

/// Cached machine predictions over the proximity pool plus the pool's
/// targets. `machine_preds[m]` is S x N: row i holds machine m's prediction
/// for proximity frame i. Immutable once built.
struct ProximitySet {
    std::vector<Eigen::MatrixXd> machine_preds;   // M entries, each S x N
    Eigen::MatrixXd targets;                      // S x N
    std::vector<SplitTag> provenance;             // length S

    Eigen::Index size() const { return targets.rows(); }
    std::size_t machine_count() const { return machine_preds.size(); }
    Eigen::Index output_dim() const { return targets.cols(); }
};

/// Indicator weights over a proximity set. When no point qualifies all
/// weights are zero and `fallback` is set; otherwise qualified points share
/// the unit mass uniformly.
struct WeightVector {
    Eigen::VectorXd weights;
    int qualified_count = 0;
    bool fallback = false;
};

struct EnsemblePrediction {
    Eigen::VectorXd value;
    int qualified_count = 0;
    bool fallback = false;
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

/// Number of machines that must place a point within epsilon. The 1e-9 guard
/// keeps exact multiples like alpha = 3/5 with M = 5 from rounding up to 4.
inline int required_consensus(std::size_t machine_count, const EnsembleConfig& config) {
    const double alpha = config.variant == EnsembleVariant::COBRA ? 1.0 : config.alpha;
    const double product = static_cast<double>(machine_count) * alpha;
    if (product < 1.0 - 1e-9) {
        throw ConfigError("consensus level alpha=" + std::to_string(alpha) + " with " +
                          std::to_string(machine_count) + " machines requires M*alpha >= 1");
    }
    const int required = static_cast<int>(std::ceil(product - 1e-9));
    return std::min<int>(std::max(required, 1), static_cast<int>(machine_count));
}

namespace detail {

// Sequential-sum Euclidean distance between machine m's cached prediction for
// proximity row i and its prediction for the query. Kept as a plain loop so
// results are reproducible regardless of SIMD width.
inline double prediction_distance(const Eigen::MatrixXd& preds, Eigen::Index row,
                                  const Eigen::MatrixXd& query_preds, Eigen::Index m) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < preds.cols(); ++j) {
        const double d = preds(row, j) - query_preds(m, j);
        sum += d * d;
    }
    return std::sqrt(sum);
}

} // namespace detail

/// Splits a training block for the partitioned variants: the machines train
/// on the first `n1` pairs, the remainder only contributes proximity points.
inline std::size_t partition_point(std::size_t n_train, double fraction) {
    if (n_train < 2) {
        throw DataError("partitioned variant needs at least 2 training pairs");
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ConfigError("partition_fraction must lie in (0,1)");
    }
    const auto n1 = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(n_train)));
    return std::clamp<std::size_t>(n1, 1, n_train - 1);
}

/// Fits the bank on the variant's training region: the full training split
/// for DPE, the first partition for PaDPE and COBRA.
inline void fit_bank(MachineBank& bank, const FrameDataset& dataset,
                     const EnsembleConfig& config, std::uint64_t seed) {
    if (config.variant == EnsembleVariant::DPE) {
        bank.fit_all(dataset.train(), seed);
    } else {
        const std::size_t n1 = partition_point(dataset.n_train, config.partition_fraction);
        bank.fit_all(dataset.train().subspan(0, n1), seed);
    }
}

enum class ProximityPhase { Tune, Test };

/// Collects the proximity pool for the variant and phase and caches every
/// machine's predictions over it, one predict_batch per machine. Tune-phase
/// pools cover the training split (both parts for the partitioned variants);
/// test-phase pools additionally include the validation split.
inline ProximitySet build_proximity_set(const MachineBank& bank, const FrameDataset& dataset,
                                        const EnsembleConfig& config, ProximityPhase phase) {
    std::vector<const FramePair*> pool;
    std::vector<SplitTag> tags;
    const std::size_t n1 = config.variant == EnsembleVariant::DPE
                               ? dataset.n_train
                               : partition_point(dataset.n_train, config.partition_fraction);
    for (std::size_t i = 0; i < dataset.n_train; ++i) {
        pool.push_back(&dataset.pairs[i]);
        tags.push_back(i < n1 ? SplitTag::Train : SplitTag::TrainHoldout);
    }
    if (phase == ProximityPhase::Test) {
        for (const auto& p : dataset.validation()) {
            pool.push_back(&p);
            tags.push_back(SplitTag::Validation);
        }
    }
    if (pool.empty()) {
        throw DataError("proximity set would be empty");
    }

    const Eigen::Index s = static_cast<Eigen::Index>(pool.size());
    std::vector<Frame> frames;
    frames.reserve(pool.size());
    for (const FramePair* p : pool) {
        frames.push_back(p->frame);
    }
    ProximitySet prox;
    prox.machine_preds.reserve(bank.size());
    for (std::size_t m = 0; m < bank.size(); ++m) {
        prox.machine_preds.push_back(bank.machine(m).predict_batch(frames));
    }
    prox.targets.resize(s, pool.front()->target.size());
    for (Eigen::Index i = 0; i < s; ++i) {
        prox.targets.row(i) = pool[static_cast<std::size_t>(i)]->target.transpose();
    }
    prox.provenance = std::move(tags);
    return prox;
}

/// Indicator consensus weights: proximity point i qualifies when at least
/// required_consensus() machines place it within epsilon of the query, and
/// qualified points share the unit mass uniformly. Zero qualification is a
/// valid state reported through the fallback flag, not an error.
inline WeightVector consensus_weights(const ProximitySet& prox, const Eigen::MatrixXd& query_preds,
                                      const EnsembleConfig& config) {
    const auto m_count = static_cast<Eigen::Index>(prox.machine_count());
    if (query_preds.rows() != m_count || query_preds.cols() != prox.output_dim()) {
        throw DataError("query predictions have shape " + std::to_string(query_preds.rows()) +
                        "x" + std::to_string(query_preds.cols()) + ", expected " +
                        std::to_string(m_count) + "x" + std::to_string(prox.output_dim()));
    }
    if (!(config.epsilon > 0.0)) {
        throw ConfigError("epsilon must be positive");
    }
    const int required = required_consensus(prox.machine_count(), config);

    WeightVector out;
    out.weights = Eigen::VectorXd::Zero(prox.size());
    std::vector<Eigen::Index> qualified;
    for (Eigen::Index i = 0; i < prox.size(); ++i) {
        int close = 0;
        for (Eigen::Index m = 0; m < m_count; ++m) {
            if (detail::prediction_distance(prox.machine_preds[static_cast<std::size_t>(m)], i,
                                            query_preds, m) <= config.epsilon) {
                ++close;
            }
        }
        if (close >= required) {
            qualified.push_back(i);
        }
    }
    out.qualified_count = static_cast<int>(qualified.size());
    if (qualified.empty()) {
        out.fallback = true;
        return out;
    }
    const double w = 1.0 / static_cast<double>(qualified.size());
    for (Eigen::Index i : qualified) {
        out.weights(i) = w;
    }
    return out;
}

/// Weighted sum of proximity targets, or the mean of the machines' own
/// predictions when nothing qualified (flagged via the weight vector).
inline Eigen::VectorXd aggregate(const ProximitySet& prox, const WeightVector& weights,
                                 const Eigen::MatrixXd& query_preds) {
    const Eigen::Index n_dim = prox.output_dim();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n_dim);
    if (weights.qualified_count == 0) {
        for (Eigen::Index m = 0; m < query_preds.rows(); ++m) {
            out += query_preds.row(m).transpose();
        }
        return out / static_cast<double>(query_preds.rows());
    }
    for (Eigen::Index i = 0; i < prox.size(); ++i) {
        if (weights.weights(i) != 0.0) {
            out += weights.weights(i) * prox.targets.row(i).transpose();
        }
    }
    return out;
}

/// One-step ensemble prediction for a query frame.
inline EnsemblePrediction predict_ensemble(const MachineBank& bank, const ProximitySet& prox,
                                           const Frame& query, const EnsembleConfig& config) {
    const Eigen::MatrixXd query_preds = bank.predict_query(query);
    const WeightVector weights = consensus_weights(prox, query_preds, config);
    EnsemblePrediction pred;
    pred.value = aggregate(prox, weights, query_preds);
    pred.qualified_count = weights.qualified_count;
    pred.fallback = weights.fallback;
    return pred;
}

/// Batch prediction with per-step diagnostics, used by tuning, evaluation and
/// the sweeps.
struct EnsembleBatch {
    Eigen::MatrixXd predictions;       // n x N
    std::vector<int> qualified_counts; // length n
    std::vector<bool> fallbacks;       // length n
    int fallback_count = 0;

    double fallback_rate() const {
        return fallbacks.empty() ? 0.0
                                 : static_cast<double>(fallback_count) /
                                       static_cast<double>(fallbacks.size());
    }
    double mean_qualified() const {
        if (qualified_counts.empty()) return 0.0;
        double s = 0.0;
        for (int q : qualified_counts) s += q;
        return s / static_cast<double>(qualified_counts.size());
    }
};

inline EnsembleBatch predict_ensemble_batch(const MachineBank& bank, const ProximitySet& prox,
                                            std::span<const FramePair> queries,
                                            const EnsembleConfig& config) {
    EnsembleBatch batch;
    batch.predictions.resize(static_cast<Eigen::Index>(queries.size()), prox.output_dim());
    batch.qualified_counts.reserve(queries.size());
    batch.fallbacks.reserve(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const EnsemblePrediction p = predict_ensemble(bank, prox, queries[i].frame, config);
        batch.predictions.row(static_cast<Eigen::Index>(i)) = p.value.transpose();
        batch.qualified_counts.push_back(p.qualified_count);
        batch.fallbacks.push_back(p.fallback);
        if (p.fallback) ++batch.fallback_count;
    }
    return batch;
}

/// Prediction export: one row per step with the timestamp of the predicted
/// observation, per-dimension values, the qualified count and the fallback
/// flag.
inline void export_predictions_csv(const std::string& path,
                                   const std::vector<std::string>& timestamps,
                                   const EnsembleBatch& batch,
                                   const std::vector<std::string>& column_names) {
    const auto n = static_cast<std::size_t>(batch.predictions.rows());
    if (timestamps.size() != n) {
        throw DataError("export_predictions_csv: timestamp count mismatch");
    }
    std::string out = "timestamp";
    for (const auto& c : column_names) {
        out += ",pred_" + csv_quote_if_needed(c);
    }
    out += ",qualified_count,fallback\n";
    for (std::size_t i = 0; i < n; ++i) {
        out += csv_quote_if_needed(timestamps[i]);
        for (Eigen::Index j = 0; j < batch.predictions.cols(); ++j) {
            out += "," + format_double(batch.predictions(static_cast<Eigen::Index>(i), j));
        }
        out += "," + std::to_string(batch.qualified_counts[i]);
        out += batch.fallbacks[i] ? ",1\n" : ",0\n";
    }
    write_text_file(path, out);
}

} // namespace dpe
