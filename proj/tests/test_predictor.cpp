#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "bscb/error.hpp"
#include "bscb/predictor.hpp"

using namespace bscb;

namespace {

RegressionTree leaf(double v) {
    RegressionTree t;
    t.nodes.push_back({-1, 0.0, -1, -1, v});
    return t;
}

std::vector<LabeledRow> random_rows(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<LabeledRow> rows(n);
    for (auto& r : rows) {
        for (auto& f : r.features) f = u(rng);
        r.label = 10.0 * r.features[2] + 3.0 * r.features[8] + u(rng);
    }
    return rows;
}

ForestConfig exact_single_tree() {
    ForestConfig c;
    c.tree_count = 1;
    c.bootstrap = false;
    c.sample_fraction = 1.0;
    c.max_features = static_cast<int>(kFeatureCount);
    c.max_depth = 0;
    c.min_leaf = 1;
    return c;
}

}  // namespace

TEST_CASE("feature extraction order and shape") {
    ContextSnapshot s;
    const auto zero = extract_features(s);
    CHECK(zero.size() == 10);
    for (double v : zero) CHECK(v == 0.0);
    CHECK(feature_names()[kPayloadFeature] == "payload_size");

    s.rsrp = -90;
    s.sinr = 7;
    s.cqi = 9;
    ContextSnapshot t = s;
    t.payload_size = 1e6;
    const auto a = extract_features(s);
    const auto b = extract_features(t);
    for (std::size_t i = 0; i < kFeatureCount; ++i) {
        if (i == kPayloadFeature) CHECK(a[i] != b[i]);
        else CHECK(a[i] == b[i]);
    }
    CHECK(a[0] == -90);
    CHECK(a[2] == 7);
    CHECK(a[3] == 9);
}

TEST_CASE("cell hash lies in [0, 1)") {
    CHECK(hash_cell_id("") == 0.0);
    for (const char* id : {"a", "cell-17", "262-01-4711"}) {
        const double h = hash_cell_id(id);
        CHECK(h >= 0.0);
        CHECK(h < 1.0);
    }
    CHECK(hash_cell_id("x") == hash_cell_id("x"));
}

TEST_CASE("forest prediction is the mean of its trees") {
    ForestModel m;
    m.trees = {leaf(4.0), leaf(6.0)};
    CHECK(m.predict({}) == 5.0);
    ForestModel single;
    single.trees = {leaf(3.2)};
    FeatureVector x{};
    x[2] = 123.0;
    CHECK(single.predict(x) == 3.2);
}

TEST_CASE("constant labels give a constant forest") {
    auto rows = random_rows(40, 1);
    for (auto& r : rows) r.label = 7.25;
    const auto m = train_forest(rows, {});
    for (const auto& r : random_rows(10, 2)) CHECK(m.predict(r.features) == doctest::Approx(7.25).epsilon(1e-12));
}

TEST_CASE("unlimited single tree fits unique rows exactly") {
    const auto rows = random_rows(60, 3);
    const auto m = train_forest(rows, exact_single_tree());
    std::vector<PredictionRecord> rec;
    for (const auto& r : rows) rec.push_back({{}, m.predict(r.features), r.label});
    CHECK(prediction_rmse(rec) == doctest::Approx(0.0));
    // Every row sits in its own leaf.
    CHECK(m.trees.front().leaf_count() == rows.size());
}

TEST_CASE("stump split matches the hand trace") {
    std::vector<LabeledRow> rows(10);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].features[2] = i < 5 ? 0.0 : 10.0;
        rows[i].label = i < 5 ? 2.0 : 8.0;
    }
    auto cfg = exact_single_tree();
    cfg.max_depth = 1;
    const auto m = train_forest(rows, cfg);
    const auto& root = m.trees.front().nodes.front();
    CHECK(root.feature == 2);
    CHECK(root.threshold == 5.0);
    FeatureVector probe{};
    probe[2] = 4.9;
    CHECK(m.predict(probe) == 2.0);
    probe[2] = 5.1;
    CHECK(m.predict(probe) == 8.0);
}

TEST_CASE("training is deterministic per seed") {
    const auto rows = random_rows(200, 4);
    ForestConfig cfg;
    cfg.seed = 9;
    const auto a = train_forest(rows, cfg);
    const auto b = train_forest(rows, cfg);
    for (const auto& r : random_rows(50, 5)) CHECK(a.predict(r.features) == b.predict(r.features));
    CHECK(std::isfinite(a.oob_rmse));
}

TEST_CASE("tree order and duplicate trees do not change predictions") {
    const auto m = train_forest(random_rows(200, 6), {});
    ForestModel reversed = m;
    std::reverse(reversed.trees.begin(), reversed.trees.end());
    ForestModel doubled = m;
    doubled.trees.insert(doubled.trees.end(), m.trees.begin(), m.trees.end());
    for (const auto& r : random_rows(30, 7)) {
        CHECK(reversed.predict(r.features) == doctest::Approx(m.predict(r.features)).epsilon(1e-12));
        CHECK(doubled.predict(r.features) == doctest::Approx(m.predict(r.features)).epsilon(1e-12));
    }
}

TEST_CASE("training rejects bad input") {
    CHECK_THROWS_AS(train_forest({}, {}), ConfigError);
    CHECK_THROWS_AS(train_forest(random_rows(5, 1), {}), ConfigError);
    auto rows = random_rows(20, 1);
    rows[3].label = -1.0;
    CHECK_THROWS_AS(train_forest(rows, {}), ConfigError);
}

TEST_CASE("rmse examples") {
    const std::vector<PredictionRecord> equal{{{}, 3, 3}, {{}, 1, 1}};
    CHECK(prediction_rmse(equal) == 0.0);
    const std::vector<PredictionRecord> pair{{{}, 2, 0}, {{}, 0, 2}};
    CHECK(prediction_rmse(pair) == doctest::Approx(2.0));
    const std::vector<PredictionRecord> one{{{}, 5, 2}};
    CHECK(prediction_rmse(one) == doctest::Approx(3.0));
    CHECK_THROWS_AS(prediction_rmse(std::vector<PredictionRecord>{}), ConfigError);
}

TEST_CASE("rmse scales linearly and is zero only for equal pairs") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<PredictionRecord> r(5), scaled(5);
        const double k = u(rng) / 4.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] = {{}, u(rng), u(rng)};
            scaled[i] = {{}, k * r[i].predicted, k * r[i].measured};
        }
        const double base = prediction_rmse(r);
        CHECK(base > 0.0);
        CHECK(prediction_rmse(scaled) == doctest::Approx(k * base).epsilon(1e-12));
    }
}

TEST_CASE("model JSON round trip preserves predictions") {
    const auto m = train_forest(random_rows(150, 8), {});
    const auto path = std::filesystem::temp_directory_path() / "bscb_test_model.json";
    save_forest(m, path);
    const auto back = load_forest(path);
    std::filesystem::remove(path);
    for (const auto& r : random_rows(30, 9)) CHECK(back.predict(r.features) == m.predict(r.features));
    CHECK_THROWS_AS(load_forest("/nonexistent/model.json"), ConfigError);
}

TEST_CASE("oracle predictor is label plus repeatable noise") {
    ContextSnapshot s;
    s.timestamp = 12.0;
    s.measured_rate = 6.0;
    const OraclePredictor exact(0.0, 1);
    CHECK(exact.predict(s) == 6.0);
    const OraclePredictor noisy(1.0, 1);
    CHECK(noisy.predict(s) == noisy.predict(s));
    CHECK(noisy.predict(s) >= 0.0);
}
