#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "dpe/series.hpp"

namespace dpe {

/// Bundled stand-in datasets so experiments and tests never require
/// downloads. Both are two-dimensional and deterministic given the seed.

/// Damped sinusoid pair with seeded Gaussian noise. Both columns share one
/// fundamental period so the joint frame pattern recurs along the series,
/// which is the regime proximity ensembles are built for.
inline RawSeries make_sinusoid(std::size_t length, std::uint64_t seed, double noise_sd = 0.02) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_sd);
    RawSeries series;
    series.values.resize(static_cast<Eigen::Index>(length), 2);
    series.timestamps.reserve(length);
    series.column_names = {"signal_a", "signal_b"};
    const double period = 20.0;
    const double damping = 10.0 * static_cast<double>(length);
    for (std::size_t t = 0; t < length; ++t) {
        const double x = static_cast<double>(t);
        const double decay = std::exp(-x / damping);
        const double phase = 2.0 * M_PI * x / period;
        series.values(static_cast<Eigen::Index>(t), 0) = decay * std::sin(phase) + noise(rng);
        series.values(static_cast<Eigen::Index>(t), 1) =
            decay * (0.8 * std::cos(phase) + 0.4 * std::sin(2.0 * phase)) + noise(rng);
        series.timestamps.push_back(std::to_string(t));
    }
    return series;
}

/// Random walk pair: cumulative sums of seeded Gaussian steps, offset away
/// from zero so percentage errors stay well defined.
inline RawSeries make_random_walk(std::size_t length, std::uint64_t seed, double step_sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> step(0.0, step_sd);
    RawSeries series;
    series.values.resize(static_cast<Eigen::Index>(length), 2);
    series.timestamps.reserve(length);
    series.column_names = {"walk_a", "walk_b"};
    double a = 100.0;
    double b = 250.0;
    for (std::size_t t = 0; t < length; ++t) {
        a += step(rng);
        b += step(rng);
        series.values(static_cast<Eigen::Index>(t), 0) = a;
        series.values(static_cast<Eigen::Index>(t), 1) = b;
        series.timestamps.push_back(std::to_string(t));
    }
    return series;
}

} // namespace dpe
