#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpe/common.hpp"
#include "dpe/series.hpp"

namespace dpe {

using ParamMap = std::map<std::string, double>;

inline double param_or(const ParamMap& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    return it == params.end() ? fallback : it->second;
}

/// Flattening order for learners over a frame: row-major on the N x w window,
/// i.e. variable-major then time. Documented constant; both Ridge and the MLP
/// use it.
inline Eigen::VectorXd flatten_frame(const Frame& frame) {
    const Eigen::Index n = frame.n_vars();
    const Eigen::Index w = frame.width();
    Eigen::VectorXd out(n * w);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < w; ++j) {
            out(i * w + j) = frame.window(i, j);
        }
    }
    return out;
}

/// Base-learner contract. A machine maps a frame to an N-dimensional
/// one-step-ahead prediction. fit() must be reproducible given the seed;
/// predict() on a fitted machine is read-only and concurrency safe.
class Machine {
public:
    virtual ~Machine() = default;

    virtual const std::string& name() const { return name_; }

    virtual void fit(std::span<const FramePair> pairs, std::uint64_t seed) = 0;
    virtual Eigen::VectorXd predict(const Frame& frame) const = 0;

    /// Per-frame predictions stacked into a rows-by-N matrix; elementwise
    /// identical to repeated predict().
    Eigen::MatrixXd predict_batch(std::span<const Frame> frames) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(frames.size()), output_dim());
        for (std::size_t i = 0; i < frames.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = predict(frames[i]).transpose();
        }
        return out;
    }

    Eigen::MatrixXd predict_pairs(std::span<const FramePair> pairs) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(pairs.size()), output_dim());
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            out.row(static_cast<Eigen::Index>(i)) = predict(pairs[i].frame).transpose();
        }
        return out;
    }

    bool fitted() const { return fitted_; }

    virtual nlohmann::json to_json() const = 0;

protected:
    explicit Machine(std::string name) : name_(std::move(name)) {}

    void require_fitted() const {
        if (!fitted_) {
            throw StateError(name_ + ": predict called before fit");
        }
    }

    void check_frame_shape(const Frame& frame) const {
        if (frame.n_vars() != in_vars_ || frame.width() != in_width_) {
            throw DataError(name_ + ": frame shape " + std::to_string(frame.n_vars()) + "x" +
                            std::to_string(frame.width()) + " does not match training shape " +
                            std::to_string(in_vars_) + "x" + std::to_string(in_width_));
        }
    }

    void record_training_shape(std::span<const FramePair> pairs) {
        if (pairs.empty()) {
            throw DataError(name_ + ": fit needs at least one training pair");
        }
        in_vars_ = pairs.front().frame.n_vars();
        in_width_ = pairs.front().frame.width();
        out_dim_ = pairs.front().target.size();
        for (const auto& p : pairs) {
            if (p.frame.n_vars() != in_vars_ || p.frame.width() != in_width_ ||
                p.target.size() != out_dim_) {
                throw DataError(name_ + ": inconsistent shapes in training pairs");
            }
        }
    }

    Eigen::Index output_dim() const {
        require_fitted();
        return out_dim_;
    }

    std::string name_;
    bool fitted_ = false;
    Eigen::Index in_vars_ = 0;
    Eigen::Index in_width_ = 0;
    Eigen::Index out_dim_ = 0;
};

namespace detail {

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
    const auto r = static_cast<Eigen::Index>(j.size());
    const auto c = r == 0 ? 0 : static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        for (Eigen::Index k = 0; k < c; ++k) {
            m(i, k) = j.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
        }
    }
    return m;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Ridge autoregressive machine
// ---------------------------------------------------------------------------

/// Linear map from the flattened window (plus bias) to the next step, solved
/// in closed form from the regularized normal equations. The bias is not
/// penalized.
class RidgeARMachine : public Machine {
public:
    explicit RidgeARMachine(double lambda = 1e-6) : Machine("ridge"), lambda_(lambda) {
        if (lambda < 0.0) {
            throw ConfigError("ridge: lambda must be nonnegative");
        }
    }

    void fit(std::span<const FramePair> pairs, std::uint64_t /*seed*/) override {
        record_training_shape(pairs);
        const Eigen::Index n = static_cast<Eigen::Index>(pairs.size());
        const Eigen::Index d = in_vars_ * in_width_;
        Eigen::MatrixXd x(n, d + 1);
        Eigen::MatrixXd y(n, out_dim_);
        for (Eigen::Index i = 0; i < n; ++i) {
            x.row(i).head(d) = flatten_frame(pairs[static_cast<std::size_t>(i)].frame).transpose();
            x(i, d) = 1.0;
            y.row(i) = pairs[static_cast<std::size_t>(i)].target.transpose();
        }
        Eigen::MatrixXd gram = x.transpose() * x;
        for (Eigen::Index j = 0; j < d; ++j) {
            gram(j, j) += lambda_;
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
        if (!lu.isInvertible()) {
            throw DataError("ridge: singular normal equations (lambda=" +
                            std::to_string(lambda_) + "); add regularization or more data");
        }
        theta_ = lu.solve(x.transpose() * y);
        fitted_ = true;
    }

    Eigen::VectorXd predict(const Frame& frame) const override {
        require_fitted();
        check_frame_shape(frame);
        const Eigen::Index d = in_vars_ * in_width_;
        Eigen::VectorXd xb(d + 1);
        xb.head(d) = flatten_frame(frame);
        xb(d) = 1.0;
        return theta_.transpose() * xb;
    }

    /// (N*w + 1) x N coefficient matrix, bias in the last row.
    const Eigen::MatrixXd& coefficients() const { return theta_; }
    double lambda() const { return lambda_; }

    nlohmann::json to_json() const override {
        require_fitted();
        return {{"format_version", 1},
                {"type", "ridge"},
                {"lambda", lambda_},
                {"in_vars", in_vars_},
                {"in_width", in_width_},
                {"out_dim", out_dim_},
                {"coefficients", detail::matrix_to_json(theta_)}};
    }

    static std::unique_ptr<RidgeARMachine> from_json(const nlohmann::json& j) {
        auto m = std::make_unique<RidgeARMachine>(j.at("lambda").get<double>());
        m->in_vars_ = j.at("in_vars").get<Eigen::Index>();
        m->in_width_ = j.at("in_width").get<Eigen::Index>();
        m->out_dim_ = j.at("out_dim").get<Eigen::Index>();
        m->theta_ = detail::matrix_from_json(j.at("coefficients"));
        m->fitted_ = true;
        return m;
    }

private:
    double lambda_;
    Eigen::MatrixXd theta_;   // (d+1) x N
};

// ---------------------------------------------------------------------------
// k-nearest-neighbour machine
// ---------------------------------------------------------------------------

/// Stores the training pairs and predicts the mean target of the k windows
/// closest in Frobenius norm. Distance ties resolve to the lower start index.
class KnnFrameMachine : public Machine {
public:
    explicit KnnFrameMachine(int k = 3) : Machine("knn"), k_(k) {
        if (k < 1) {
            throw ConfigError("knn: k must be at least 1");
        }
    }

    void fit(std::span<const FramePair> pairs, std::uint64_t /*seed*/) override {
        record_training_shape(pairs);
        if (static_cast<std::size_t>(k_) > pairs.size()) {
            throw DataError("knn: k=" + std::to_string(k_) + " exceeds number of training pairs (" +
                            std::to_string(pairs.size()) + ")");
        }
        stored_.assign(pairs.begin(), pairs.end());
        fitted_ = true;
    }

    Eigen::VectorXd predict(const Frame& frame) const override {
        require_fitted();
        check_frame_shape(frame);
        std::vector<std::pair<double, std::size_t>> order(stored_.size());
        for (std::size_t i = 0; i < stored_.size(); ++i) {
            order[i] = {(stored_[i].frame.window - frame.window).norm(), i};
        }
        std::partial_sort(order.begin(), order.begin() + k_, order.end(),
                          [this](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first < b.first;
                              return stored_[a.second].frame.start_index <
                                     stored_[b.second].frame.start_index;
                          });
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(out_dim_);
        for (int i = 0; i < k_; ++i) {
            sum += stored_[order[static_cast<std::size_t>(i)].second].target;
        }
        return sum / static_cast<double>(k_);
    }

    int k() const { return k_; }

    nlohmann::json to_json() const override {
        require_fitted();
        nlohmann::json frames = nlohmann::json::array();
        nlohmann::json targets = nlohmann::json::array();
        nlohmann::json starts = nlohmann::json::array();
        for (const auto& p : stored_) {
            frames.push_back(detail::matrix_to_json(p.frame.window));
            targets.push_back(detail::matrix_to_json(p.target.transpose()));
            starts.push_back(p.frame.start_index);
        }
        return {{"format_version", 1}, {"type", "knn"},      {"k", k_},
                {"in_vars", in_vars_}, {"in_width", in_width_}, {"out_dim", out_dim_},
                {"frames", frames},    {"targets", targets},  {"start_indices", starts}};
    }

    static std::unique_ptr<KnnFrameMachine> from_json(const nlohmann::json& j) {
        auto m = std::make_unique<KnnFrameMachine>(j.at("k").get<int>());
        m->in_vars_ = j.at("in_vars").get<Eigen::Index>();
        m->in_width_ = j.at("in_width").get<Eigen::Index>();
        m->out_dim_ = j.at("out_dim").get<Eigen::Index>();
        const auto& frames = j.at("frames");
        const auto& targets = j.at("targets");
        const auto& starts = j.at("start_indices");
        for (std::size_t i = 0; i < frames.size(); ++i) {
            FramePair p;
            p.frame.window = detail::matrix_from_json(frames.at(i));
            p.frame.start_index = starts.at(i).get<Eigen::Index>();
            p.target = detail::matrix_from_json(targets.at(i)).row(0).transpose();
            m->stored_.push_back(std::move(p));
        }
        m->fitted_ = true;
        return m;
    }

private:
    int k_;
    std::vector<FramePair> stored_;
};

// ---------------------------------------------------------------------------
// Single-hidden-layer MLP machine
// ---------------------------------------------------------------------------

struct MlpOptions {
    int hidden = 16;
    double learning_rate = 0.001;   // fixed defaults shared by all tuned runs
    int epochs = 80;
    int batch_size = 32;
};

/// tanh hidden layer, linear output, trained by seeded mini-batch gradient
/// descent on squared error. Exposes its parameters and analytic gradients so
/// they can be checked against finite differences.
class MlpMachine : public Machine {
public:
    explicit MlpMachine(MlpOptions opts = {}) : Machine("mlp"), opts_(opts) {
        if (opts.hidden < 1 || opts.epochs < 0 || opts.batch_size < 1 ||
            opts.learning_rate <= 0.0) {
            throw ConfigError("mlp: invalid options");
        }
    }

    void fit(std::span<const FramePair> pairs, std::uint64_t seed) override {
        record_training_shape(pairs);
        const Eigen::Index d = in_vars_ * in_width_;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> dist(0.0, 1.0);
        auto init = [&](Eigen::MatrixXd& m, double fan_in) {
            const double s = 1.0 / std::sqrt(fan_in);
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    m(i, j) = dist(rng) * s;
                }
            }
        };
        w1_.resize(opts_.hidden, d);
        b1_ = Eigen::VectorXd::Zero(opts_.hidden);
        w2_.resize(out_dim_, opts_.hidden);
        b2_ = Eigen::VectorXd::Zero(out_dim_);
        init(w1_, static_cast<double>(d));
        init(w2_, static_cast<double>(opts_.hidden));
        fitted_ = true;

        epoch_losses_.clear();
        const std::size_t n = pairs.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<const FramePair*> batch;
        for (int epoch = 0; epoch < opts_.epochs; ++epoch) {
            if (static_cast<std::size_t>(opts_.batch_size) < n) {
                std::shuffle(order.begin(), order.end(), rng);
            }
            for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(opts_.batch_size)) {
                const std::size_t stop = std::min(n, start + static_cast<std::size_t>(opts_.batch_size));
                batch.clear();
                for (std::size_t i = start; i < stop; ++i) {
                    batch.push_back(&pairs[order[i]]);
                }
                apply_gradient_step(batch);
            }
            epoch_losses_.push_back(loss(pairs));
        }
    }

    Eigen::VectorXd predict(const Frame& frame) const override {
        require_fitted();
        check_frame_shape(frame);
        return forward(flatten_frame(frame));
    }

    /// Mean over pairs of 0.5 * squared error.
    double loss(std::span<const FramePair> pairs) const {
        require_fitted();
        double total = 0.0;
        for (const auto& p : pairs) {
            total += 0.5 * (forward(flatten_frame(p.frame)) - p.target).squaredNorm();
        }
        return total / static_cast<double>(pairs.size());
    }

    /// Flat parameter vector in the fixed order (w1, b1, w2, b2).
    Eigen::VectorXd parameters() const {
        require_fitted();
        Eigen::VectorXd out(parameter_count());
        Eigen::Index at = 0;
        auto put = [&](const auto& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    out(at++) = m(i, j);
                }
            }
        };
        put(w1_);
        put(b1_);
        put(w2_);
        put(b2_);
        return out;
    }

    void set_parameters(const Eigen::VectorXd& flat) {
        require_fitted();
        if (flat.size() != parameter_count()) {
            throw DataError("mlp: parameter vector has wrong length");
        }
        Eigen::Index at = 0;
        auto take = [&](auto& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    m(i, j) = flat(at++);
                }
            }
        };
        take(w1_);
        take(b1_);
        take(w2_);
        take(b2_);
    }

    /// Analytic gradient of loss() with respect to parameters(), same layout.
    Eigen::VectorXd loss_gradient(std::span<const FramePair> pairs) const {
        require_fitted();
        Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(w1_.rows(), w1_.cols());
        Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(b1_.size());
        Eigen::MatrixXd gw2 = Eigen::MatrixXd::Zero(w2_.rows(), w2_.cols());
        Eigen::VectorXd gb2 = Eigen::VectorXd::Zero(b2_.size());
        accumulate_gradients(pairs, gw1, gb1, gw2, gb2);

        Eigen::VectorXd out(parameter_count());
        Eigen::Index at = 0;
        auto put = [&](const auto& m) {
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                for (Eigen::Index j = 0; j < m.cols(); ++j) {
                    out(at++) = m(i, j);
                }
            }
        };
        put(gw1);
        put(gb1);
        put(gw2);
        put(gb2);
        return out;
    }

    /// Full training loss recorded after each epoch of the last fit.
    const std::vector<double>& epoch_losses() const { return epoch_losses_; }
    const MlpOptions& options() const { return opts_; }

    nlohmann::json to_json() const override {
        require_fitted();
        return {{"format_version", 1},
                {"type", "mlp"},
                {"hidden", opts_.hidden},
                {"learning_rate", opts_.learning_rate},
                {"epochs", opts_.epochs},
                {"batch_size", opts_.batch_size},
                {"in_vars", in_vars_},
                {"in_width", in_width_},
                {"out_dim", out_dim_},
                {"w1", detail::matrix_to_json(w1_)},
                {"b1", detail::matrix_to_json(b1_.transpose())},
                {"w2", detail::matrix_to_json(w2_)},
                {"b2", detail::matrix_to_json(b2_.transpose())}};
    }

    static std::unique_ptr<MlpMachine> from_json(const nlohmann::json& j) {
        MlpOptions opts;
        opts.hidden = j.at("hidden").get<int>();
        opts.learning_rate = j.at("learning_rate").get<double>();
        opts.epochs = j.at("epochs").get<int>();
        opts.batch_size = j.at("batch_size").get<int>();
        auto m = std::make_unique<MlpMachine>(opts);
        m->in_vars_ = j.at("in_vars").get<Eigen::Index>();
        m->in_width_ = j.at("in_width").get<Eigen::Index>();
        m->out_dim_ = j.at("out_dim").get<Eigen::Index>();
        m->w1_ = detail::matrix_from_json(j.at("w1"));
        m->b1_ = detail::matrix_from_json(j.at("b1")).row(0).transpose();
        m->w2_ = detail::matrix_from_json(j.at("w2"));
        m->b2_ = detail::matrix_from_json(j.at("b2")).row(0).transpose();
        m->fitted_ = true;
        return m;
    }

private:
    Eigen::Index parameter_count() const {
        return w1_.size() + b1_.size() + w2_.size() + b2_.size();
    }

    Eigen::VectorXd forward(const Eigen::VectorXd& x) const {
        const Eigen::VectorXd hidden = ((w1_ * x) + b1_).array().tanh();
        return w2_ * hidden + b2_;
    }

    void accumulate_gradients(std::span<const FramePair> pairs, Eigen::MatrixXd& gw1,
                              Eigen::VectorXd& gb1, Eigen::MatrixXd& gw2,
                              Eigen::VectorXd& gb2) const {
        const double inv_n = 1.0 / static_cast<double>(pairs.size());
        for (const auto& p : pairs) {
            const Eigen::VectorXd x = flatten_frame(p.frame);
            const Eigen::VectorXd pre = (w1_ * x) + b1_;
            const Eigen::VectorXd hidden = pre.array().tanh();
            const Eigen::VectorXd out = w2_ * hidden + b2_;
            const Eigen::VectorXd err = out - p.target;                    // dL/dout
            const Eigen::VectorXd dh = (w2_.transpose() * err).array() *
                                       (1.0 - hidden.array().square());    // through tanh
            gw2 += inv_n * err * hidden.transpose();
            gb2 += inv_n * err;
            gw1 += inv_n * dh * x.transpose();
            gb1 += inv_n * dh;
        }
    }

    void apply_gradient_step(const std::vector<const FramePair*>& batch) {
        Eigen::MatrixXd gw1 = Eigen::MatrixXd::Zero(w1_.rows(), w1_.cols());
        Eigen::VectorXd gb1 = Eigen::VectorXd::Zero(b1_.size());
        Eigen::MatrixXd gw2 = Eigen::MatrixXd::Zero(w2_.rows(), w2_.cols());
        Eigen::VectorXd gb2 = Eigen::VectorXd::Zero(b2_.size());
        const double inv_n = 1.0 / static_cast<double>(batch.size());
        for (const FramePair* p : batch) {
            const Eigen::VectorXd x = flatten_frame(p->frame);
            const Eigen::VectorXd pre = (w1_ * x) + b1_;
            const Eigen::VectorXd hidden = pre.array().tanh();
            const Eigen::VectorXd out = w2_ * hidden + b2_;
            const Eigen::VectorXd err = out - p->target;
            const Eigen::VectorXd dh = (w2_.transpose() * err).array() *
                                       (1.0 - hidden.array().square());
            gw2 += inv_n * err * hidden.transpose();
            gb2 += inv_n * err;
            gw1 += inv_n * dh * x.transpose();
            gb1 += inv_n * dh;
        }
        w1_ -= opts_.learning_rate * gw1;
        b1_ -= opts_.learning_rate * gb1;
        w2_ -= opts_.learning_rate * gw2;
        b2_ -= opts_.learning_rate * gb2;
    }

    MlpOptions opts_;
    Eigen::MatrixXd w1_, w2_;
    Eigen::VectorXd b1_, b2_;
    std::vector<double> epoch_losses_;
};

// ---------------------------------------------------------------------------
// Registry and bank
// ---------------------------------------------------------------------------

using MachineFactory = std::function<std::unique_ptr<Machine>(const ParamMap&)>;

inline std::map<std::string, MachineFactory>& machine_registry() {
    static std::map<std::string, MachineFactory> registry = [] {
        std::map<std::string, MachineFactory> r;
        r["ridge"] = [](const ParamMap& p) {
            return std::make_unique<RidgeARMachine>(param_or(p, "lambda", 1e-6));
        };
        r["knn"] = [](const ParamMap& p) {
            return std::make_unique<KnnFrameMachine>(static_cast<int>(param_or(p, "k", 3)));
        };
        r["mlp"] = [](const ParamMap& p) {
            MlpOptions opts;
            opts.hidden = static_cast<int>(param_or(p, "hidden", 16));
            opts.learning_rate = param_or(p, "learning_rate", 0.001);
            opts.epochs = static_cast<int>(param_or(p, "epochs", 80));
            opts.batch_size = static_cast<int>(param_or(p, "batch", 32));
            return std::make_unique<MlpMachine>(opts);
        };
        return r;
    }();
    return registry;
}

inline void register_machine(const std::string& name, MachineFactory factory) {
    machine_registry()[name] = std::move(factory);
}

inline std::unique_ptr<Machine> make_machine(const std::string& name, const ParamMap& params = {}) {
    auto& registry = machine_registry();
    auto it = registry.find(name);
    if (it == registry.end()) {
        throw ConfigError("unknown machine '" + name + "'");
    }
    return it->second(params);
}

struct MachineSpec {
    std::string name;
    ParamMap params;
};

/// An ordered set of machines built from specs and fitted together. Machine i
/// receives the seed stream derive_seed(seed, i), so one seed reproduces the
/// whole bank.
class MachineBank {
public:
    MachineBank() = default;

    explicit MachineBank(const std::vector<MachineSpec>& roster) {
        if (roster.empty()) {
            throw ConfigError("machine roster is empty");
        }
        for (const auto& spec : roster) {
            machines_.push_back(make_machine(spec.name, spec.params));
        }
    }

    void fit_all(std::span<const FramePair> pairs, std::uint64_t seed) {
        for (std::size_t i = 0; i < machines_.size(); ++i) {
            machines_[i]->fit(pairs, derive_seed(seed, i));
        }
    }

    std::size_t size() const { return machines_.size(); }

    const Machine& machine(std::size_t i) const { return *machines_.at(i); }
    Machine& machine(std::size_t i) { return *machines_.at(i); }

    void add(std::unique_ptr<Machine> machine) { machines_.push_back(std::move(machine)); }

    /// Stacked per-machine predictions for one query frame: M x N.
    Eigen::MatrixXd predict_query(const Frame& frame) const {
        if (machines_.empty()) {
            throw StateError("machine bank is empty");
        }
        Eigen::VectorXd first = machines_[0]->predict(frame);
        Eigen::MatrixXd out(static_cast<Eigen::Index>(machines_.size()), first.size());
        out.row(0) = first.transpose();
        for (std::size_t m = 1; m < machines_.size(); ++m) {
            out.row(static_cast<Eigen::Index>(m)) = machines_[m]->predict(frame).transpose();
        }
        return out;
    }

private:
    std::vector<std::unique_ptr<Machine>> machines_;
};

/// Versioned JSON blob for a fitted machine; load_machine() restores it.
inline nlohmann::json save_machine(const Machine& machine) { return machine.to_json(); }

inline std::unique_ptr<Machine> load_machine(const nlohmann::json& j) {
    if (j.at("format_version").get<int>() != 1) {
        throw DataError("unsupported machine format_version");
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "ridge") return RidgeARMachine::from_json(j);
    if (type == "knn") return KnnFrameMachine::from_json(j);
    if (type == "mlp") return MlpMachine::from_json(j);
    throw DataError("unknown machine type '" + type + "' in blob");
}

} // namespace dpe
