#include <catch2/catch.hpp>

#include "dpe/ensemble.hpp"
#include "dpe/synthetic.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dpe;

namespace {

/// The two-machine, one-dimensional worked example used across these tests:
/// cached predictions r1 = (0.10, 0.50, 0.90), r2 = (0.20, 0.55, 0.80),
/// targets (0.3, 0.6, 0.9), query predictions (0.12, 0.18).
ProximitySet example_prox() {
    ProximitySet prox;
    Eigen::MatrixXd r1(3, 1), r2(3, 1);
    r1 << 0.10, 0.50, 0.90;
    r2 << 0.20, 0.55, 0.80;
    prox.machine_preds = {r1, r2};
    prox.targets.resize(3, 1);
    prox.targets << 0.3, 0.6, 0.9;
    prox.provenance = {SplitTag::Train, SplitTag::Train, SplitTag::Train};
    return prox;
}

Eigen::MatrixXd example_query() {
    Eigen::MatrixXd q(2, 1);
    q << 0.12, 0.18;
    return q;
}

FrameDataset sinusoid_dataset(std::size_t length, std::size_t window) {
    const RawSeries raw = make_sinusoid(length, 21);
    const Scaler scaler = fit_scaler(raw, length - 20);
    return split(build_frames(scale(raw, scaler), window), 0.1, 0.1);
}

} // namespace

TEST_CASE("a tight threshold keeps only the first proximity point") {
    const ProximitySet prox = example_prox();
    EnsembleConfig config;
    config.epsilon = 0.05;
    config.alpha = 1.0;
    const WeightVector w = consensus_weights(prox, example_query(), config);
    CHECK(w.qualified_count == 1);
    CHECK(w.weights(0) == 1.0);
    CHECK(w.weights(1) == 0.0);
    CHECK(w.weights(2) == 0.0);
    CHECK(aggregate(prox, w, example_query())(0) == Approx(0.3));
}

TEST_CASE("a looser threshold lets the second point qualify") {
    const ProximitySet prox = example_prox();
    EnsembleConfig config;
    config.epsilon = 0.4;
    config.alpha = 1.0;
    const WeightVector w = consensus_weights(prox, example_query(), config);
    CHECK(w.qualified_count == 2);
    CHECK(w.weights(0) == 0.5);
    CHECK(w.weights(1) == 0.5);
    CHECK(w.weights(2) == 0.0);
    CHECK(aggregate(prox, w, example_query())(0) == Approx(0.45));
}

TEST_CASE("zero qualification falls back to the mean of machine predictions") {
    const ProximitySet prox = example_prox();
    EnsembleConfig config;
    config.epsilon = 0.001;
    config.alpha = 1.0;
    const WeightVector w = consensus_weights(prox, example_query(), config);
    CHECK(w.qualified_count == 0);
    CHECK(w.fallback);
    CHECK(w.weights.isZero());
    CHECK(aggregate(prox, w, example_query())(0) == Approx(0.15));
}

TEST_CASE("consensus threshold arithmetic") {
    EnsembleConfig config;
    config.alpha = 3.0 / 5.0;
    CHECK(required_consensus(5, config) == 3);
    config.alpha = 1.0;
    CHECK(required_consensus(4, config) == 4);
    config.alpha = 1.0 / 3.0;
    CHECK(required_consensus(3, config) == 1);
    config.alpha = 0.1;   // M*alpha = 0.3 < 1
    CHECK_THROWS_AS(required_consensus(3, config), ConfigError);
    config.alpha = 0.4;
    config.variant = EnsembleVariant::COBRA;   // alpha ignored, unanimity required
    CHECK(required_consensus(5, config) == 5);
}

TEST_CASE("weights match the brute-force oracle on random instances") {
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
        const auto inst = testutil::make_random_instance(seed);
        const WeightVector got = consensus_weights(inst.prox, inst.query_preds, inst.config);
        const WeightVector want = oracle::weights_brute_force(inst.prox, inst.query_preds, inst.config);
        CAPTURE(seed);
        REQUIRE(got.qualified_count == want.qualified_count);
        REQUIRE(got.fallback == want.fallback);
        REQUIRE(got.weights == want.weights);
    }
}

TEST_CASE("alpha = 1 counting weights equal the intersection rule") {
    for (std::uint64_t seed = 1000; seed < 1100; ++seed) {
        auto inst = testutil::make_random_instance(seed);
        inst.config.alpha = 1.0;
        const WeightVector counting = consensus_weights(inst.prox, inst.query_preds, inst.config);
        const WeightVector intersect =
            oracle::weights_intersection(inst.prox, inst.query_preds, inst.config.epsilon);
        CAPTURE(seed);
        REQUIRE(counting.weights == intersect.weights);
        REQUIRE(counting.qualified_count == intersect.qualified_count);
    }
}

TEST_CASE("the COBRA variant is the intersection rule regardless of alpha") {
    for (std::uint64_t seed = 2000; seed < 2100; ++seed) {
        auto inst = testutil::make_random_instance(seed);
        inst.config.variant = EnsembleVariant::COBRA;
        inst.config.alpha = 0.25;   // must be ignored
        const WeightVector got = consensus_weights(inst.prox, inst.query_preds, inst.config);
        const WeightVector want =
            oracle::weights_intersection(inst.prox, inst.query_preds, inst.config.epsilon);
        CAPTURE(seed);
        REQUIRE(got.weights == want.weights);
    }
}

TEST_CASE("qualified sets grow with epsilon and shrink with alpha") {
    auto qualified_set = [](const ProximitySet& prox, const Eigen::MatrixXd& q,
                            const EnsembleConfig& c) {
        std::vector<int> set;
        const WeightVector w = consensus_weights(prox, q, c);
        for (Eigen::Index i = 0; i < w.weights.size(); ++i) {
            if (w.weights(i) > 0.0) set.push_back(static_cast<int>(i));
        }
        return set;
    };
    auto is_subset = [](const std::vector<int>& a, const std::vector<int>& b) {
        return std::includes(b.begin(), b.end(), a.begin(), a.end());
    };

    for (std::uint64_t seed = 3000; seed < 3100; ++seed) {
        const auto inst = testutil::make_random_instance(seed);

        EnsembleConfig narrow = inst.config, wide = inst.config;
        narrow.epsilon = 0.5 * inst.config.epsilon;
        wide.epsilon = 2.0 * inst.config.epsilon;
        CAPTURE(seed);
        REQUIRE(is_subset(qualified_set(inst.prox, inst.query_preds, narrow),
                          qualified_set(inst.prox, inst.query_preds, inst.config)));
        REQUIRE(is_subset(qualified_set(inst.prox, inst.query_preds, inst.config),
                          qualified_set(inst.prox, inst.query_preds, wide)));

        const auto m = inst.prox.machine_count();
        std::vector<std::vector<int>> by_alpha;
        for (std::size_t level = 1; level <= m; ++level) {
            EnsembleConfig c = inst.config;
            c.alpha = static_cast<double>(level) / static_cast<double>(m);
            by_alpha.push_back(qualified_set(inst.prox, inst.query_preds, c));
        }
        for (std::size_t level = 1; level < by_alpha.size(); ++level) {
            REQUIRE(is_subset(by_alpha[level], by_alpha[level - 1]));
        }
    }
}

TEST_CASE("weights are normalized and permutation equivariant") {
    for (std::uint64_t seed = 4000; seed < 4050; ++seed) {
        const auto inst = testutil::make_random_instance(seed);
        const WeightVector w = consensus_weights(inst.prox, inst.query_preds, inst.config);
        if (w.qualified_count > 0) {
            REQUIRE(std::abs(w.weights.sum() - 1.0) < 1e-12);
        }

        // permute proximity rows
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(inst.prox.size()));
        std::iota(perm.begin(), perm.end(), 0);
        std::mt19937_64 rng(seed);
        std::shuffle(perm.begin(), perm.end(), rng);
        ProximitySet shuffled = inst.prox;
        for (std::size_t m = 0; m < shuffled.machine_preds.size(); ++m) {
            for (std::size_t i = 0; i < perm.size(); ++i) {
                shuffled.machine_preds[m].row(static_cast<Eigen::Index>(i)) =
                    inst.prox.machine_preds[m].row(perm[i]);
            }
        }
        for (std::size_t i = 0; i < perm.size(); ++i) {
            shuffled.targets.row(static_cast<Eigen::Index>(i)) = inst.prox.targets.row(perm[i]);
        }
        const WeightVector ws = consensus_weights(shuffled, inst.query_preds, inst.config);
        for (std::size_t i = 0; i < perm.size(); ++i) {
            REQUIRE(ws.weights(static_cast<Eigen::Index>(i)) == w.weights(perm[i]));
        }
        REQUIRE((aggregate(shuffled, ws, inst.query_preds) -
                 aggregate(inst.prox, w, inst.query_preds))
                    .cwiseAbs()
                    .maxCoeff() < 1e-12);

        // permute machines
        ProximitySet swapped = inst.prox;
        std::reverse(swapped.machine_preds.begin(), swapped.machine_preds.end());
        const Eigen::MatrixXd query_swapped = inst.query_preds.colwise().reverse();
        const WeightVector wm = consensus_weights(swapped, query_swapped, inst.config);
        REQUIRE(wm.weights == w.weights);
    }
}

TEST_CASE("proximity pools per variant and phase") {
    const FrameDataset ds = sinusoid_dataset(102, 2);
    REQUIRE(ds.n_train == 80);
    REQUIRE(ds.n_val == 10);
    const std::vector<MachineSpec> roster = {{"ridge", {{"lambda", 1e-4}}}, {"knn", {{"k", 3}}}};

    SECTION("full-train variant") {
        EnsembleConfig config;
        config.variant = EnsembleVariant::DPE;
        MachineBank bank(roster);
        fit_bank(bank, ds, config, 1);
        const ProximitySet tune = build_proximity_set(bank, ds, config, ProximityPhase::Tune);
        CHECK(tune.size() == 80);
        const ProximitySet test = build_proximity_set(bank, ds, config, ProximityPhase::Test);
        CHECK(test.size() == 90);
        CHECK(std::count(test.provenance.begin(), test.provenance.end(), SplitTag::Validation) == 10);
        CHECK(test.machine_count() == 2);
    }

    SECTION("partitioned variant trains on the first half and pools everything") {
        EnsembleConfig config;
        config.variant = EnsembleVariant::PaDPE;
        config.partition_fraction = 0.5;
        MachineBank bank(roster);
        fit_bank(bank, ds, config, 1);
        const ProximitySet tune = build_proximity_set(bank, ds, config, ProximityPhase::Tune);
        CHECK(tune.size() == 80);
        CHECK(std::count(tune.provenance.begin(), tune.provenance.end(), SplitTag::Train) == 40);
        CHECK(std::count(tune.provenance.begin(), tune.provenance.end(), SplitTag::TrainHoldout) == 40);
        const ProximitySet test = build_proximity_set(bank, ds, config, ProximityPhase::Test);
        CHECK(test.size() == 90);
    }
}

TEST_CASE("a separated training frame predicts its own target") {
    // well-separated one-point clusters: the query is a training frame and
    // only that frame can qualify
    std::vector<FramePair> pairs(3);
    const double frames_at[3] = {0.0, 100.0, 200.0};
    const double targets_at[3] = {0.5, 10.0, 20.0};
    for (int i = 0; i < 3; ++i) {
        pairs[static_cast<std::size_t>(i)].frame.window =
            Eigen::MatrixXd::Constant(1, 1, frames_at[i]);
        pairs[static_cast<std::size_t>(i)].frame.start_index = i;
        pairs[static_cast<std::size_t>(i)].target = Eigen::VectorXd::Constant(1, targets_at[i]);
    }
    FrameDataset ds;
    ds.pairs = pairs;
    ds.n_train = 3;

    testutil::register_stub_machines();
    MachineBank bank;
    bank.add(make_machine("last_value"));
    bank.fit_all(ds.train(), 0);

    EnsembleConfig config;
    config.epsilon = 1.0;
    config.alpha = 1.0;
    const ProximitySet prox = build_proximity_set(bank, ds, config, ProximityPhase::Tune);
    const EnsemblePrediction pred = predict_ensemble(bank, prox, pairs[1].frame, config);
    CHECK(pred.qualified_count == 1);
    CHECK_FALSE(pred.fallback);
    CHECK(pred.value(0) == 10.0);
}

TEST_CASE("a single machine reduces to an epsilon-ball average around its prediction") {
    testutil::register_stub_machines();
    // frames whose last values cluster near 0.1 and far at 0.9
    std::vector<FramePair> pairs;
    const double values[] = {0.10, 0.12, 0.14, 0.90, 0.95};
    const double targets[] = {1.0, 2.0, 3.0, 50.0, 60.0};
    for (int i = 0; i < 5; ++i) {
        FramePair p;
        p.frame.window = Eigen::MatrixXd::Constant(1, 1, values[i]);
        p.frame.start_index = i;
        p.target = Eigen::VectorXd::Constant(1, targets[i]);
        pairs.push_back(std::move(p));
    }
    FrameDataset ds;
    ds.pairs = pairs;
    ds.n_train = 5;

    MachineBank bank;
    bank.add(make_machine("last_value"));
    bank.fit_all(ds.train(), 0);

    EnsembleConfig config;
    config.epsilon = 0.05;
    config.alpha = 1.0;
    const ProximitySet prox = build_proximity_set(bank, ds, config, ProximityPhase::Tune);

    Frame query;
    query.window = Eigen::MatrixXd::Constant(1, 1, 0.11);
    const EnsemblePrediction pred = predict_ensemble(bank, prox, query, config);
    // machine prediction is 0.11: within 0.05 of 0.10, 0.12 and 0.14
    CHECK(pred.qualified_count == 3);
    CHECK(pred.value(0) == Approx(2.0));
}

TEST_CASE("batch prediction mirrors single prediction and counts fallbacks") {
    const FrameDataset ds = sinusoid_dataset(102, 2);
    const std::vector<MachineSpec> roster = {{"ridge", {{"lambda", 1e-4}}}, {"knn", {{"k", 3}}}};
    EnsembleConfig config;
    config.epsilon = 0.08;
    config.alpha = 0.5;
    MachineBank bank(roster);
    fit_bank(bank, ds, config, 1);
    const ProximitySet prox = build_proximity_set(bank, ds, config, ProximityPhase::Test);
    const EnsembleBatch batch = predict_ensemble_batch(bank, prox, ds.test(), config);
    REQUIRE(batch.predictions.rows() == static_cast<Eigen::Index>(ds.n_test));
    for (std::size_t i = 0; i < ds.n_test; ++i) {
        const EnsemblePrediction single = predict_ensemble(bank, prox, ds.test()[i].frame, config);
        REQUIRE(batch.predictions.row(static_cast<Eigen::Index>(i)) == single.value.transpose());
        REQUIRE(batch.qualified_counts[i] == single.qualified_count);
    }
    CHECK(batch.fallback_rate() >= 0.0);
    CHECK(batch.fallback_rate() <= 1.0);
}

TEST_CASE("prediction export writes one row per step") {
    testutil::TempDir dir;
    EnsembleBatch batch;
    batch.predictions.resize(2, 2);
    batch.predictions << 0.25, 0.5, 0.75, 1.0;
    batch.qualified_counts = {3, 0};
    batch.fallbacks = {false, true};
    batch.fallback_count = 1;
    const std::string path = dir.file("preds.csv");
    export_predictions_csv(path, {"t1", "t2"}, batch, {"a", "b"});
    const auto [header, rows] = read_csv_table(path);
    REQUIRE(header == std::vector<std::string>{"timestamp", "pred_a", "pred_b",
                                               "qualified_count", "fallback"});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0][0] == "t1");
    CHECK(rows[1][3] == "0");
    CHECK(rows[1][4] == "1");
}
