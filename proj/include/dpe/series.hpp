#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpe/common.hpp"

namespace dpe {

/// A multivariate series: T chronological observations of N variables.
/// Rows are time steps, columns are variables. Immutable by convention:
/// every pipeline operation returns a new value.
struct RawSeries {
    Eigen::MatrixXd values;                  // T x N
    std::vector<std::string> timestamps;     // length T, strictly increasing
    std::vector<std::string> column_names;   // length N

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
};

/// Per-column min/max fitted on training rows only.
struct Scaler {
    Eigen::VectorXd col_min;
    Eigen::VectorXd col_max;

    Eigen::Index cols() const { return col_min.size(); }
};

/// One sliding window over the series: N variables by `w` consecutive time
/// steps (rows are variables, columns time). `start_index` is the series row
/// of the window's first column.
struct Frame {
    Eigen::MatrixXd window;      // N x w
    Eigen::Index start_index = 0;

    Eigen::Index n_vars() const { return window.rows(); }
    Eigen::Index width() const { return window.cols(); }
};

struct FramePair {
    Frame frame;
    Eigen::VectorXd target;      // series row at start_index + w
};

/// Chronologically ordered (frame, next-step target) pairs with split counts.
struct FrameDataset {
    std::vector<FramePair> pairs;
    std::size_t n_train = 0;
    std::size_t n_val = 0;
    std::size_t n_test = 0;
    double partition_fraction = 0.5;   // n1/n for partitioned variants

    std::size_t size() const { return pairs.size(); }

    std::span<const FramePair> train() const {
        return {pairs.data(), n_train};
    }
    std::span<const FramePair> validation() const {
        return {pairs.data() + n_train, n_val};
    }
    std::span<const FramePair> test() const {
        return {pairs.data() + n_train + n_val, n_test};
    }
};

// ---------------------------------------------------------------------------
// Pipeline operations
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::Index column_index(const RawSeries& series, const std::string& name) {
    auto it = std::find(series.column_names.begin(), series.column_names.end(), name);
    if (it == series.column_names.end()) {
        throw DataError("unknown column '" + name + "'");
    }
    return static_cast<Eigen::Index>(it - series.column_names.begin());
}

} // namespace detail

/// Replaces the selected columns by their running prefix sums; other columns
/// are untouched. An empty selection returns the series unchanged.
inline RawSeries cumsum(const RawSeries& series, const std::vector<std::string>& columns) {
    if (series.rows() == 0) {
        throw DataError("cumsum: empty series");
    }
    RawSeries out = series;
    for (const auto& name : columns) {
        const Eigen::Index c = detail::column_index(series, name);
        double acc = 0.0;
        for (Eigen::Index t = 0; t < out.rows(); ++t) {
            acc += out.values(t, c);
            out.values(t, c) = acc;
        }
    }
    return out;
}

/// Per-column min/max over the first `train_rows` rows only. Later rows never
/// influence the result. A constant training column is rejected so data
/// problems surface here rather than as silent zero divisions downstream.
inline Scaler fit_scaler(const RawSeries& series, std::size_t train_rows) {
    if (train_rows < 2) {
        throw DataError("fit_scaler: need at least 2 training rows");
    }
    if (static_cast<Eigen::Index>(train_rows) > series.rows()) {
        throw DataError("fit_scaler: train_rows exceeds series length");
    }
    const Eigen::Index n = static_cast<Eigen::Index>(train_rows);
    Scaler s;
    s.col_min = series.values.topRows(n).colwise().minCoeff();
    s.col_max = series.values.topRows(n).colwise().maxCoeff();
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
        if (s.col_max(c) == s.col_min(c)) {
            throw DataError("fit_scaler: column '" + series.column_names[static_cast<std::size_t>(c)] +
                            "' is constant over the training rows");
        }
    }
    return s;
}

inline void check_scaler(const Scaler& scaler, Eigen::Index cols) {
    if (scaler.cols() != cols) {
        throw DataError("scaler has " + std::to_string(scaler.cols()) +
                        " columns, data has " + std::to_string(cols));
    }
    for (Eigen::Index c = 0; c < scaler.cols(); ++c) {
        if (!(scaler.col_max(c) > scaler.col_min(c))) {
            throw DataError("degenerate scaler column " + std::to_string(c));
        }
    }
}

/// (x - min) / (max - min) per column. Training rows land in [0,1]; rows
/// outside the fitted range may fall outside, which is fine.
inline Eigen::MatrixXd scale_values(const Eigen::MatrixXd& values, const Scaler& scaler) {
    check_scaler(scaler, values.cols());
    Eigen::MatrixXd out = values;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double lo = scaler.col_min(c);
        const double range = scaler.col_max(c) - lo;
        out.col(c) = (out.col(c).array() - lo) / range;
    }
    return out;
}

inline Eigen::MatrixXd inverse_scale(const Eigen::MatrixXd& values, const Scaler& scaler) {
    check_scaler(scaler, values.cols());
    Eigen::MatrixXd out = values;
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
        const double lo = scaler.col_min(c);
        const double range = scaler.col_max(c) - lo;
        out.col(c) = out.col(c).array() * range + lo;
    }
    return out;
}

inline RawSeries scale(const RawSeries& series, const Scaler& scaler) {
    RawSeries out = series;
    out.values = scale_values(series.values, scaler);
    return out;
}

inline Eigen::VectorXd scale_row(const Eigen::VectorXd& row, const Scaler& scaler) {
    return scale_values(row.transpose(), scaler).row(0).transpose();
}

inline Eigen::VectorXd inverse_scale_row(const Eigen::VectorXd& row, const Scaler& scaler) {
    return inverse_scale(row.transpose(), scaler).row(0).transpose();
}

/// Slides a width-`window` cut over the series. Pair j covers series rows
/// j .. j+window-1 and its target is row j+window, so the dataset has exactly
/// T - window pairs and the target is always one step past the window.
inline FrameDataset build_frames(const RawSeries& series, std::size_t window) {
    if (window < 1) {
        throw DataError("build_frames: window must be >= 1");
    }
    const Eigen::Index w = static_cast<Eigen::Index>(window);
    const Eigen::Index t = series.rows();
    if (t <= w) {
        throw DataError("build_frames: series length " + std::to_string(t) +
                        " does not exceed window " + std::to_string(window));
    }
    FrameDataset out;
    out.pairs.reserve(static_cast<std::size_t>(t - w));
    for (Eigen::Index j = 0; j + w < t; ++j) {
        FramePair p;
        p.frame.window = series.values.middleRows(j, w).transpose();
        p.frame.start_index = j;
        p.target = series.values.row(j + w).transpose();
        out.pairs.push_back(std::move(p));
    }
    out.n_train = out.pairs.size();
    return out;
}

/// Chronological split. Validation and test get floor(frac * n) pairs each,
/// train keeps the remainder; the test block is the final segment.
inline FrameDataset split(FrameDataset dataset, double val_frac, double test_frac) {
    if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
        throw DataError("split: fractions must be nonnegative and sum below 1");
    }
    const std::size_t n = dataset.pairs.size();
    const std::size_t n_val = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
    const std::size_t n_test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(n)));
    if (n_val + n_test >= n) {
        throw DataError("split: no training pairs left");
    }
    const std::size_t n_train = n - n_val - n_test;
    if (n_train == 0 || n_val == 0 || n_test == 0) {
        throw DataError("split: empty partition (train " + std::to_string(n_train) +
                        ", val " + std::to_string(n_val) + ", test " + std::to_string(n_test) + ")");
    }
    dataset.n_train = n_train;
    dataset.n_val = n_val;
    dataset.n_test = n_test;
    return dataset;
}

} // namespace dpe
