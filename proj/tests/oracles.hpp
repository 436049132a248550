#pragma once

// Independent reference implementations used to verify the library. These are
// deliberately naive (plain loops, direct transcription of the definitions)
// and must stay decoupled from the code paths they check.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "dpe/ensemble.hpp"

namespace oracle {

/// Brute-force consensus weights: triple loop over points, machines and
/// output dimensions. Point i qualifies when at least ceil(M*alpha - 1e-9)
/// machines put it within epsilon of the query.
inline dpe::WeightVector weights_brute_force(const dpe::ProximitySet& prox,
                                             const Eigen::MatrixXd& query_preds,
                                             const dpe::EnsembleConfig& config) {
    const std::size_t s = static_cast<std::size_t>(prox.size());
    const std::size_t m_count = prox.machine_count();
    const double alpha = config.variant == dpe::EnsembleVariant::COBRA ? 1.0 : config.alpha;
    const int needed = static_cast<int>(std::ceil(static_cast<double>(m_count) * alpha - 1e-9));

    std::vector<int> qualified;
    for (std::size_t i = 0; i < s; ++i) {
        int close_machines = 0;
        for (std::size_t m = 0; m < m_count; ++m) {
            double sum_sq = 0.0;
            for (Eigen::Index d = 0; d < prox.output_dim(); ++d) {
                const double diff = prox.machine_preds[m](static_cast<Eigen::Index>(i), d) -
                                    query_preds(static_cast<Eigen::Index>(m), d);
                sum_sq += diff * diff;
            }
            if (std::sqrt(sum_sq) <= config.epsilon) {
                ++close_machines;
            }
        }
        if (close_machines >= needed) {
            qualified.push_back(static_cast<int>(i));
        }
    }

    dpe::WeightVector out;
    out.weights = Eigen::VectorXd::Zero(prox.size());
    out.qualified_count = static_cast<int>(qualified.size());
    out.fallback = qualified.empty();
    for (int i : qualified) {
        out.weights(i) = 1.0 / static_cast<double>(qualified.size());
    }
    return out;
}

/// Direct transcription of the intersection rule: a point qualifies only if
/// every machine places it within epsilon.
inline dpe::WeightVector weights_intersection(const dpe::ProximitySet& prox,
                                              const Eigen::MatrixXd& query_preds,
                                              double epsilon) {
    const std::size_t s = static_cast<std::size_t>(prox.size());
    const std::size_t m_count = prox.machine_count();
    std::vector<int> qualified;
    for (std::size_t i = 0; i < s; ++i) {
        bool all_close = true;
        for (std::size_t m = 0; m < m_count && all_close; ++m) {
            double sum_sq = 0.0;
            for (Eigen::Index d = 0; d < prox.output_dim(); ++d) {
                const double diff = prox.machine_preds[m](static_cast<Eigen::Index>(i), d) -
                                    query_preds(static_cast<Eigen::Index>(m), d);
                sum_sq += diff * diff;
            }
            if (std::sqrt(sum_sq) > epsilon) {
                all_close = false;
            }
        }
        if (all_close) {
            qualified.push_back(static_cast<int>(i));
        }
    }
    dpe::WeightVector out;
    out.weights = Eigen::VectorXd::Zero(prox.size());
    out.qualified_count = static_cast<int>(qualified.size());
    out.fallback = qualified.empty();
    for (int i : qualified) {
        out.weights(i) = 1.0 / static_cast<double>(qualified.size());
    }
    return out;
}

/// Midranks, transcribed from the textbook definition.
inline std::vector<double> midranks_reference(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<double> ranks(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double below = 0.0;
        double equal = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (values[j] < values[i]) below += 1.0;
            if (values[j] == values[i]) equal += 1.0;
        }
        ranks[i] = below + 0.5 * (equal + 1.0);
    }
    return ranks;
}

/// Exact two-sided Wilcoxon p-value by enumerating all 2^n sign assignments.
/// Usable up to n around 20; tests keep n <= 12.
inline double wilcoxon_enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    const std::size_t n = diff.size();
    std::vector<double> absdiff(n);
    for (std::size_t i = 0; i < n; ++i) absdiff[i] = std::abs(diff[i]);
    const std::vector<double> ranks = midranks_reference(absdiff);

    double observed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (diff[i] > 0.0) observed += ranks[i];
    }

    const std::size_t total = std::size_t{1} << n;
    double at_or_below = 0.0;
    double at_or_above = 0.0;
    for (std::size_t mask = 0; mask < total; ++mask) {
        double w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (mask & (std::size_t{1} << i)) w += ranks[i];
        }
        if (w <= observed + 1e-12) at_or_below += 1.0;
        if (w >= observed - 1e-12) at_or_above += 1.0;
    }
    const double denom = static_cast<double>(total);
    return std::min(1.0, 2.0 * std::min(at_or_below, at_or_above) / denom);
}

} // namespace oracle
