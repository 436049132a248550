#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dpe/common.hpp"

namespace dpe {

inline double rmse(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
    if (actual.size() != predicted.size() || actual.size() == 0) {
        throw DataError("rmse: vectors must have equal nonzero length");
    }
    return std::sqrt((actual - predicted).squaredNorm() / static_cast<double>(actual.size()));
}

/// Mean absolute percentage error, in percent. Zero actuals are a hard error:
/// the ratio is undefined there and padding the denominator would fabricate
/// results.
inline double mape(const Eigen::VectorXd& actual, const Eigen::VectorXd& predicted) {
    if (actual.size() != predicted.size() || actual.size() == 0) {
        throw DataError("mape: vectors must have equal nonzero length");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < actual.size(); ++i) {
        if (actual(i) == 0.0) {
            throw DataError("mape: actual value at position " + std::to_string(i) + " is zero");
        }
        sum += std::abs(actual(i) - predicted(i)) / std::abs(actual(i));
    }
    return 100.0 * sum / static_cast<double>(actual.size());
}

inline Eigen::VectorXd rmse_per_dimension(const Eigen::MatrixXd& actual,
                                          const Eigen::MatrixXd& predicted) {
    if (actual.rows() != predicted.rows() || actual.cols() != predicted.cols()) {
        throw DataError("rmse_per_dimension: shape mismatch");
    }
    Eigen::VectorXd out(actual.cols());
    for (Eigen::Index c = 0; c < actual.cols(); ++c) {
        out(c) = rmse(actual.col(c), predicted.col(c));
    }
    return out;
}

inline Eigen::VectorXd mape_per_dimension(const Eigen::MatrixXd& actual,
                                          const Eigen::MatrixXd& predicted) {
    if (actual.rows() != predicted.rows() || actual.cols() != predicted.cols()) {
        throw DataError("mape_per_dimension: shape mismatch");
    }
    Eigen::VectorXd out(actual.cols());
    for (Eigen::Index c = 0; c < actual.cols(); ++c) {
        out(c) = mape(actual.col(c), predicted.col(c));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

struct WilcoxonResult {
    double statistic = 0.0;   // W+: sum of ranks of positive differences
    double p_value = 1.0;     // two-sided
    int n_used = 0;           // pairs remaining after zero differences drop
    bool exact = false;       // exact distribution vs normal approximation
};

namespace detail {

/// Midranks of |values|, ties averaged.
inline std::vector<double> midranks(const std::vector<double>& absdiff) {
    const std::size_t n = absdiff.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return absdiff[a] < absdiff[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && absdiff[order[j + 1]] == absdiff[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;   // mean of ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

} // namespace detail

/// Two-sided Wilcoxon signed-rank test of paired samples. Zero differences
/// are dropped. Exact sign-flip distribution for up to 25 effective pairs,
/// tie-corrected normal approximation above. p = 2 * min(P(W <= w), P(W >= w))
/// capped at 1, with W the positive-rank sum.
inline WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DataError("wilcoxon: samples must be paired");
    }
    if (a.size() < 5) {
        throw DataError("wilcoxon: need at least 5 pairs");
    }
    std::vector<double> diff;
    diff.reserve(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    if (diff.empty()) {
        throw DataError("wilcoxon: all differences are zero");
    }
    const std::size_t n = diff.size();
    std::vector<double> absdiff(n);
    for (std::size_t i = 0; i < n; ++i) absdiff[i] = std::abs(diff[i]);
    const std::vector<double> ranks = detail::midranks(absdiff);

    double w_plus = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (diff[i] > 0.0) w_plus += ranks[i];
    }

    WilcoxonResult result;
    result.statistic = w_plus;
    result.n_used = static_cast<int>(n);

    if (n <= 25) {
        // Exact distribution of W+ over all 2^n sign assignments. Midranks are
        // multiples of 1/2, so doubled ranks are integers and a subset-sum
        // table enumerates the distribution exactly.
        result.exact = true;
        std::vector<long long> doubled(n);
        long long total = 0;
        for (std::size_t i = 0; i < n; ++i) {
            doubled[i] = std::llround(2.0 * ranks[i]);
            total += doubled[i];
        }
        std::vector<double> ways(static_cast<std::size_t>(total) + 1, 0.0);
        ways[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (long long s = total; s >= doubled[i]; --s) {
                ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - doubled[i])];
            }
        }
        const long long observed = std::llround(2.0 * w_plus);
        const double denom = std::pow(2.0, static_cast<double>(n));
        double below = 0.0, above = 0.0;
        for (long long s = 0; s <= total; ++s) {
            if (s <= observed) below += ways[static_cast<std::size_t>(s)];
            if (s >= observed) above += ways[static_cast<std::size_t>(s)];
        }
        result.p_value = std::min(1.0, 2.0 * std::min(below, above) / denom);
    } else {
        result.exact = false;
        const double dn = static_cast<double>(n);
        const double mean = dn * (dn + 1.0) / 4.0;
        double tie_correction = 0.0;
        {
            std::vector<double> sorted(absdiff);
            std::sort(sorted.begin(), sorted.end());
            std::size_t i = 0;
            while (i < n) {
                std::size_t j = i;
                while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
                const double t = static_cast<double>(j - i + 1);
                tie_correction += t * t * t - t;
                i = j + 1;
            }
        }
        const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_correction / 48.0;
        const double z = (w_plus - mean) / std::sqrt(var);
        result.p_value = std::min(1.0, 2.0 * (1.0 - detail::normal_cdf(std::abs(z))));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Rank comparison
// ---------------------------------------------------------------------------

/// Per-model average rank over a datasets-by-models metric matrix. Rank 1 is
/// the lowest (best) metric on a dataset; ties receive the mean of the tied
/// ranks.
inline Eigen::VectorXd average_ranks(const Eigen::MatrixXd& metric_matrix) {
    const Eigen::Index n_datasets = metric_matrix.rows();
    const Eigen::Index n_models = metric_matrix.cols();
    if (n_datasets == 0 || n_models == 0) {
        throw DataError("average_ranks: empty matrix");
    }
    Eigen::VectorXd sums = Eigen::VectorXd::Zero(n_models);
    for (Eigen::Index d = 0; d < n_datasets; ++d) {
        std::vector<double> row(static_cast<std::size_t>(n_models));
        for (Eigen::Index m = 0; m < n_models; ++m) row[static_cast<std::size_t>(m)] = metric_matrix(d, m);
        const std::vector<double> ranks = detail::midranks(row);
        for (Eigen::Index m = 0; m < n_models; ++m) sums(m) += ranks[static_cast<std::size_t>(m)];
    }
    return sums / static_cast<double>(n_datasets);
}

// ---------------------------------------------------------------------------
// Run records and model comparison
// ---------------------------------------------------------------------------

/// Per-(model, dataset) forecast record on the test split, in both scaled and
/// raw space.
struct ForecastRun {
    std::string model;
    std::string dataset;
    Eigen::MatrixXd predictions_scaled;
    Eigen::MatrixXd actuals_scaled;
    Eigen::MatrixXd predictions_raw;
    Eigen::MatrixXd actuals_raw;
    int fallback_count = 0;
    std::vector<std::string> timestamps;   // time of each predicted observation

    double metric(const std::string& name, bool scaled_space) const {
        const Eigen::MatrixXd& act = scaled_space ? actuals_scaled : actuals_raw;
        const Eigen::MatrixXd& pred = scaled_space ? predictions_scaled : predictions_raw;
        if (name == "rmse") return rmse_per_dimension(act, pred).mean();
        if (name == "mape") return mape_per_dimension(act, pred).mean();
        throw ConfigError("unknown metric '" + name + "'");
    }
};

/// Ranks plus pairwise Wilcoxon p-values against a reference model.
struct ComparisonReport {
    std::vector<std::string> models;
    std::vector<std::string> datasets;
    Eigen::MatrixXd metric_matrix;                   // datasets x models
    Eigen::VectorXd ranks;                           // per model
    std::string reference;
    std::vector<std::optional<double>> p_values;     // per model vs reference
};

/// Builds the comparison for one metric. p-values need at least 5 datasets
/// (the Wilcoxon precondition) and are omitted otherwise; the reference
/// model's own entry and all-tied columns are also omitted.
inline ComparisonReport build_comparison(std::vector<std::string> models,
                                         std::vector<std::string> datasets,
                                         Eigen::MatrixXd metric_matrix,
                                         const std::string& reference) {
    ComparisonReport report;
    const auto ref_it = std::find(models.begin(), models.end(), reference);
    if (ref_it == models.end()) {
        throw ConfigError("reference model '" + reference + "' not in model list");
    }
    const auto ref_col = static_cast<Eigen::Index>(ref_it - models.begin());
    report.models = std::move(models);
    report.datasets = std::move(datasets);
    report.metric_matrix = std::move(metric_matrix);
    report.reference = reference;
    report.ranks = average_ranks(report.metric_matrix);
    report.p_values.assign(report.models.size(), std::nullopt);
    if (report.metric_matrix.rows() >= 5) {
        for (std::size_t m = 0; m < report.models.size(); ++m) {
            const auto col = static_cast<Eigen::Index>(m);
            if (col == ref_col) continue;
            std::vector<double> a(static_cast<std::size_t>(report.metric_matrix.rows()));
            std::vector<double> b(a.size());
            for (Eigen::Index d = 0; d < report.metric_matrix.rows(); ++d) {
                a[static_cast<std::size_t>(d)] = report.metric_matrix(d, col);
                b[static_cast<std::size_t>(d)] = report.metric_matrix(d, ref_col);
            }
            try {
                report.p_values[m] = wilcoxon_signed_rank(a, b).p_value;
            } catch (const DataError&) {
                // all differences zero: no evidence either way, leave empty
            }
        }
    }
    return report;
}

} // namespace dpe
