#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "dpe/ensemble.hpp"
#include "dpe/machines.hpp"
#include "dpe/series.hpp"

namespace testutil {

inline std::vector<dpe::FramePair> make_random_pairs(std::size_t n, Eigen::Index n_vars,
                                                     Eigen::Index width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<dpe::FramePair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        dpe::FramePair p;
        p.frame.window.resize(n_vars, width);
        for (Eigen::Index r = 0; r < n_vars; ++r) {
            for (Eigen::Index c = 0; c < width; ++c) {
                p.frame.window(r, c) = dist(rng);
            }
        }
        p.frame.start_index = static_cast<Eigen::Index>(i);
        p.target.resize(n_vars);
        for (Eigen::Index r = 0; r < n_vars; ++r) {
            p.target(r) = dist(rng);
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

inline dpe::Frame make_random_frame(Eigen::Index n_vars, Eigen::Index width, std::uint64_t seed) {
    return make_random_pairs(1, n_vars, width, seed)[0].frame;
}

/// Random proximity instance for the weight oracle suites.
struct ProximityInstance {
    dpe::ProximitySet prox;
    Eigen::MatrixXd query_preds;   // M x N
    dpe::EnsembleConfig config;
};

inline ProximityInstance make_random_instance(std::uint64_t seed, int max_points = 20,
                                              int max_machines = 4, int max_dims = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> points_dist(1, max_points);
    std::uniform_int_distribution<int> machines_dist(1, max_machines);
    std::uniform_int_distribution<int> dims_dist(1, max_dims);
    std::uniform_real_distribution<double> value(0.0, 1.0);

    const int s = points_dist(rng);
    const int m = machines_dist(rng);
    const int n = dims_dist(rng);

    ProximityInstance inst;
    inst.prox.machine_preds.reserve(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        Eigen::MatrixXd preds(s, n);
        for (int r = 0; r < s; ++r) {
            for (int c = 0; c < n; ++c) preds(r, c) = value(rng);
        }
        inst.prox.machine_preds.push_back(std::move(preds));
    }
    inst.prox.targets.resize(s, n);
    for (int r = 0; r < s; ++r) {
        for (int c = 0; c < n; ++c) inst.prox.targets(r, c) = value(rng);
    }
    inst.prox.provenance.assign(static_cast<std::size_t>(s), dpe::SplitTag::Train);
    inst.query_preds.resize(m, n);
    for (int r = 0; r < m; ++r) {
        for (int c = 0; c < n; ++c) inst.query_preds(r, c) = value(rng);
    }
    std::uniform_real_distribution<double> eps_dist(0.01, 0.8);
    std::uniform_int_distribution<int> level(1, m);
    inst.config.epsilon = eps_dist(rng);
    inst.config.alpha = static_cast<double>(level(rng)) / static_cast<double>(m);
    return inst;
}

/// Deterministic stub machine: predicts the window's last time step. Lets
/// tests control prediction geometry exactly.
class LastValueMachine : public dpe::Machine {
public:
    LastValueMachine() : Machine("last_value") {}

    void fit(std::span<const dpe::FramePair> pairs, std::uint64_t /*seed*/) override {
        record_training_shape(pairs);
        fitted_ = true;
    }

    Eigen::VectorXd predict(const dpe::Frame& frame) const override {
        require_fitted();
        return frame.window.col(frame.width() - 1);
    }

    nlohmann::json to_json() const override {
        return {{"format_version", 1}, {"type", "last_value"}};
    }
};

inline void register_stub_machines() {
    dpe::register_machine("last_value", [](const dpe::ParamMap&) {
        return std::make_unique<LastValueMachine>();
    });
}

/// Hand-built dataset where machine predictions sit exactly `gap` away from
/// every validation/test query, so consensus exists only at epsilon >= gap.
inline dpe::FrameDataset make_separable_dataset(double gap = 0.2) {
    dpe::FrameDataset ds;
    auto add = [&](double frame_value, double target_value) {
        dpe::FramePair p;
        p.frame.window = Eigen::MatrixXd::Constant(1, 1, frame_value);
        p.frame.start_index = static_cast<Eigen::Index>(ds.pairs.size());
        p.target = Eigen::VectorXd::Constant(1, target_value);
        ds.pairs.push_back(std::move(p));
    };
    for (int i = 0; i < 20; ++i) add(0.3 + gap, 0.8);   // train
    for (int i = 0; i < 5; ++i) add(0.3, 0.8);          // validation
    for (int i = 0; i < 5; ++i) add(0.3, 0.8);          // test
    ds.n_train = 20;
    ds.n_val = 5;
    ds.n_test = 5;
    return ds;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("dpe_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

} // namespace testutil
