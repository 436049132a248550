#pragma once

#include <string>
#include <vector>

#include "dpe/common.hpp"
#include "dpe/csv.hpp"
#include "dpe/hpo.hpp"

namespace dpe {

struct SweepPoint {
    double x = 0.0;
    double mse = 0.0;
    double mean_qualified = 0.0;
    double fallback_rate = 0.0;
};

struct SweepCurve {
    std::string parameter;   // "alpha" or "epsilon"
    std::vector<SweepPoint> points;
};

namespace detail {

template <typename Apply>
SweepCurve sweep_parameter(const FrameDataset& dataset, const std::vector<MachineSpec>& roster,
                           const EnsembleConfig& base, const std::vector<double>& values,
                           std::string parameter, std::uint64_t seed, Apply&& apply) {
    if (values.empty()) {
        throw ConfigError("sweep over '" + parameter + "' needs at least one value");
    }
    EnsembleEvaluator evaluator(dataset, roster, base.variant, seed);
    SweepCurve curve;
    curve.parameter = std::move(parameter);
    for (double v : values) {
        EnsembleConfig config = base;
        apply(config, v);
        const auto eval = evaluator.evaluate(config);
        curve.points.push_back({v, eval.mse, eval.mean_qualified, eval.fallback_rate});
    }
    return curve;
}

} // namespace detail

/// Validation MSE and consensus diagnostics while the consensus level varies
/// and everything else stays at the base config.
inline SweepCurve sweep_alpha(const FrameDataset& dataset, const std::vector<MachineSpec>& roster,
                              const EnsembleConfig& base, const std::vector<double>& alphas,
                              std::uint64_t seed) {
    return detail::sweep_parameter(dataset, roster, base, alphas, "alpha", seed,
                                   [](EnsembleConfig& c, double v) { c.alpha = v; });
}

/// Same sweep along the distance threshold.
inline SweepCurve sweep_epsilon(const FrameDataset& dataset, const std::vector<MachineSpec>& roster,
                                const EnsembleConfig& base, const std::vector<double>& epsilons,
                                std::uint64_t seed) {
    return detail::sweep_parameter(dataset, roster, base, epsilons, "epsilon", seed,
                                   [](EnsembleConfig& c, double v) { c.epsilon = v; });
}

/// Plot-ready CSV: x, mse, mean_qualified_count, fallback_rate.
inline void write_sweep_csv(const std::string& path, const SweepCurve& curve) {
    std::string out = curve.parameter + ",mse,mean_qualified_count,fallback_rate\n";
    for (const SweepPoint& p : curve.points) {
        out += format_double(p.x) + "," + format_double(p.mse) + "," +
               format_double(p.mean_qualified) + "," + format_double(p.fallback_rate) + "\n";
    }
    write_text_file(path, out);
}

/// The sensitivity-study default: ten log-spaced thresholds from 0.001 to
/// 0.01.
inline std::vector<double> default_epsilon_sweep() {
    std::vector<double> out;
    const double lo = std::log(0.001);
    const double hi = std::log(0.01);
    for (int i = 0; i < 10; ++i) {
        out.push_back(std::exp(lo + (hi - lo) * static_cast<double>(i) / 9.0));
    }
    return out;
}

inline std::vector<double> default_alpha_sweep(std::size_t machine_count) {
    std::vector<double> out;
    for (std::size_t i = 1; i <= machine_count; ++i) {
        out.push_back(static_cast<double>(i) / static_cast<double>(machine_count));
    }
    return out;
}

} // namespace dpe
