#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "dpe/common.hpp"
#include "dpe/csv.hpp"
#include "dpe/ensemble.hpp"
#include "dpe/series.hpp"

namespace dpe {

struct DynamicStep {
    Eigen::VectorXd prediction_raw;
    Eigen::VectorXd prediction_scaled;
    Eigen::VectorXd scaler_min;
    Eigen::VectorXd scaler_max;
    int qualified_count = 0;
    bool fallback = false;
};

/// Rolling state of the dynamic forecast: the growing raw history, the
/// scaler refitted on it each step, and the per-step log.
struct DynamicState {
    Eigen::MatrixXd history;           // raw, grows one row per step
    std::vector<std::string> column_names;
    Scaler scaler;                     // scaler of the latest step
    std::vector<DynamicStep> log;

    Eigen::MatrixXd predictions_raw() const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(log.size()), history.cols());
        for (std::size_t i = 0; i < log.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = log[i].prediction_raw.transpose();
        }
        return out;
    }
};

struct DynamicOptions {
    std::size_t window = 8;
    int refit_every = 0;                        // 0 = machines stay fixed (default)
    const Eigen::MatrixXd* backtest_actuals = nullptr;   // append these instead of predictions
    std::uint64_t refit_seed = 0;
};

/// Iterated one-step forecasting with a step-updated scaler. Each step refits
/// the min/max scaler on the full history (initial data plus everything
/// appended so far), scales, forms the latest frame, runs the ensemble,
/// inverse-scales and appends. Machines and the proximity set stay fixed by
/// default even though the scaler moves; they were trained under the original
/// scaler, so later steps are a deliberate approximation. `refit_every`
/// rebuilds machines and proximity set on the scaled history every so many
/// steps for experimentation.
inline DynamicState dynamic_forecast(const RawSeries& initial, MachineBank& bank,
                                     const ProximitySet& prox, const EnsembleConfig& config,
                                     int horizon, const DynamicOptions& options) {
    if (horizon < 1) {
        throw ConfigError("dynamic_forecast: horizon must be at least 1");
    }
    const auto w = static_cast<Eigen::Index>(options.window);
    if (w < 1 || initial.rows() < w) {
        throw DataError("dynamic_forecast: initial history cannot form a frame of width " +
                        std::to_string(options.window));
    }
    if (options.backtest_actuals && options.backtest_actuals->rows() < horizon) {
        throw DataError("dynamic_forecast: backtest actuals shorter than horizon");
    }

    DynamicState state;
    state.history = initial.values;
    state.column_names = initial.column_names;

    const ProximitySet* active_prox = &prox;
    ProximitySet refit_prox;

    for (int step = 0; step < horizon; ++step) {
        RawSeries hist;
        hist.values = state.history;
        hist.column_names = state.column_names;
        try {
            state.scaler = fit_scaler(hist, static_cast<std::size_t>(state.history.rows()));
        } catch (const DataError& e) {
            throw DataError("dynamic_forecast: step " + std::to_string(step + 1) + ": " + e.what());
        }
        const Eigen::MatrixXd scaled = scale_values(state.history, state.scaler);

        if (options.refit_every > 0 && step % options.refit_every == 0) {
            RawSeries scaled_series;
            scaled_series.values = scaled;
            scaled_series.column_names = state.column_names;
            FrameDataset frames = build_frames(scaled_series, options.window);
            fit_bank(bank, frames, config, derive_seed(options.refit_seed, static_cast<std::uint64_t>(step)));
            refit_prox = build_proximity_set(bank, frames, config, ProximityPhase::Tune);
            active_prox = &refit_prox;
        }

        Frame frame;
        frame.window = scaled.bottomRows(w).transpose();
        frame.start_index = scaled.rows() - w;
        const EnsemblePrediction pred = predict_ensemble(bank, *active_prox, frame, config);
        const Eigen::VectorXd raw = inverse_scale_row(pred.value, state.scaler);

        DynamicStep entry;
        entry.prediction_raw = raw;
        entry.prediction_scaled = pred.value;
        entry.scaler_min = state.scaler.col_min;
        entry.scaler_max = state.scaler.col_max;
        entry.qualified_count = pred.qualified_count;
        entry.fallback = pred.fallback;
        state.log.push_back(std::move(entry));

        const Eigen::VectorXd appended =
            options.backtest_actuals ? options.backtest_actuals->row(step).transpose() : raw;
        state.history.conservativeResize(state.history.rows() + 1, Eigen::NoChange);
        state.history.row(state.history.rows() - 1) = appended.transpose();
    }
    return state;
}

/// One row per step: raw prediction per dimension, then the scaler snapshot,
/// then the consensus diagnostics.
inline void export_dynamic_log(const DynamicState& state, const std::string& path) {
    std::string out = "step";
    for (const auto& c : state.column_names) out += ",pred_" + csv_quote_if_needed(c);
    for (const auto& c : state.column_names) out += ",scaler_min_" + csv_quote_if_needed(c);
    for (const auto& c : state.column_names) out += ",scaler_max_" + csv_quote_if_needed(c);
    out += ",qualified_count,fallback\n";
    for (std::size_t i = 0; i < state.log.size(); ++i) {
        const DynamicStep& s = state.log[i];
        out += std::to_string(i + 1);
        for (Eigen::Index j = 0; j < s.prediction_raw.size(); ++j) {
            out += "," + format_double(s.prediction_raw(j));
        }
        for (Eigen::Index j = 0; j < s.scaler_min.size(); ++j) {
            out += "," + format_double(s.scaler_min(j));
        }
        for (Eigen::Index j = 0; j < s.scaler_max.size(); ++j) {
            out += "," + format_double(s.scaler_max(j));
        }
        out += "," + std::to_string(s.qualified_count);
        out += s.fallback ? ",1\n" : ",0\n";
    }
    write_text_file(path, out);
}

/// Reads the CSV written by export_dynamic_log back into step records.
inline std::vector<DynamicStep> load_dynamic_log(const std::string& path) {
    const auto [header, rows] = read_csv_table(path);
    if (header.empty() || header.front() != "step") {
        throw DataError("'" + path + "' is not a dynamic log");
    }
    std::size_t n_dims = 0;
    for (const auto& h : header) {
        if (h.rfind("pred_", 0) == 0) ++n_dims;
    }
    std::vector<DynamicStep> log;
    for (const auto& row : rows) {
        if (row.size() != 3 + 3 * n_dims) {
            throw DataError("malformed dynamic log row in '" + path + "'");
        }
        DynamicStep s;
        auto grab = [&](std::size_t offset) {
            Eigen::VectorXd v(static_cast<Eigen::Index>(n_dims));
            for (std::size_t j = 0; j < n_dims; ++j) {
                auto parsed = detail::parse_double(row[offset + j]);
                if (!parsed) throw DataError("non-numeric cell in '" + path + "'");
                v(static_cast<Eigen::Index>(j)) = *parsed;
            }
            return v;
        };
        s.prediction_raw = grab(1);
        s.scaler_min = grab(1 + n_dims);
        s.scaler_max = grab(1 + 2 * n_dims);
        s.qualified_count = std::stoi(row[1 + 3 * n_dims]);
        s.fallback = row[2 + 3 * n_dims] == "1";
        log.push_back(std::move(s));
    }
    return log;
}

} // namespace dpe
