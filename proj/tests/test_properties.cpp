#include <doctest.h>

// Randomized invariants across modules. Every case draws from a fixed seed so failures reproduce.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "bscb/bandit.hpp"
#include "bscb/blackspot.hpp"
#include "bscb/error.hpp"
#include "bscb/sim.hpp"
#include "oracles.hpp"

using namespace bscb;

namespace {

std::vector<std::unique_ptr<Scheme>> all_schemes(double s_max, std::shared_ptr<const BlackSpotMap> map) {
    BanditConfig b;
    b.s_max = s_max;
    b.s_target = 0.6 * s_max;
    std::vector<std::unique_ptr<Scheme>> out;
    out.push_back(std::make_unique<PeriodicScheme>(10.0));
    out.push_back(std::make_unique<CatScheme>(ProbabilisticConfig{}, 3, false));
    out.push_back(std::make_unique<CatScheme>(ProbabilisticConfig{0, s_max, 2, 1, 120}, 3, true));
    out.push_back(std::make_unique<RlCatScheme>(b, RlCatConfig{}, 3));
    out.push_back(std::make_unique<BsCbScheme>(b, map));
    return out;
}

}  // namespace

TEST_CASE("replay invariants hold for every scheme on random scenarios") {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 6; ++trial) {
        SyntheticScenarioConfig sc;
        sc.noise_seed = rng();
        sc.layout_seed = rng() % 50;
        sc.track_length = 2000 + 3000 * u(rng);
        sc.hotspot_gain = 10 + 20 * u(rng);
        sc.snapshot_interval = 0.5 + u(rng);
        sc.planted_error_regions = trial % 3;
        sc.payload_mode = PayloadMode::Fixed;
        const auto trace = generate_synthetic_trace(sc);
        const BlackSpotMap map({{trace.snapshots[trace.snapshots.size() / 3].position, 80, 30, u(rng) - 0.5, 5}}, "A", 3.0);
        const auto shared = std::make_shared<const BlackSpotMap>(map);
        ReplayConfig cfg;
        cfg.black_spots = shared;
        cfg.channel.seed = trial + 1;
        const OraclePredictor pred(1.0, trial + 1);
        for (auto& s : all_schemes(sc.s_cap, shared)) {
            std::vector<Event> ev;
            const auto rep = run_training(trace, *s, pred, cfg, 3, &ev, EventLogMode::All);
            for (const auto& r : rep.epochs) {
                INFO(s->name());
                CHECK(r.bytes_sent == doctest::Approx(r.bytes_generated).epsilon(1e-12));
                CHECK(r.max_aoi <= cfg.dt_max + sc.snapshot_interval * 1.5 + 1e-9);
                CHECK(r.mean_aoi <= r.max_aoi + 1e-12);
                CHECK(r.mean_data_rate > 0.0);
                CHECK(r.total_prbs > 0);
                CHECK(r.total_energy >= cfg.power.idle_power_w * (trace.span() - r.tx_time) - 1e-9);
                CHECK(r.forced_tx_count <= r.tx_count);
                if (s->name() == "bscb") CHECK(r.blackspot_tx_count == 0);
            }
            for (const auto& e : ev) {
                CHECK(e.buffer_bytes > 0.0);
                if (e.action != EventAction::Idle) CHECK(e.achieved >= cfg.channel.min_rate);
                if (e.in_blackspot && s->name() == "bscb" && e.action == EventAction::Tx) CHECK(e.forced);
            }
        }
    }
}

TEST_CASE("bandit theta tracks the ridge solution under random interleaving") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> u(0.0, 40.0);
    BanditConfig cfg;
    cfg.s_max = 30;
    for (int trial = 0; trial < 10; ++trial) {
        LinUcbBandit b(cfg);
        std::vector<std::vector<double>> xs[2];
        std::vector<double> rs[2];
        const int n = 50 + static_cast<int>(rng() % 200);
        for (int i = 0; i < n; ++i) {
            const BanditContext c{u(rng), 4 * u(rng)};
            const Arm a = b.select(c);
            const double r = u(rng) / 40 - 0.3;
            b.update(a, c, r);
            const auto x = c.normalized(cfg);
            xs[static_cast<int>(a)].push_back({x[0], x[1], x[2]});
            rs[static_cast<int>(a)].push_back(r);
        }
        for (Arm a : {Arm::Idle, Arm::Tx}) {
            const int k = static_cast<int>(a);
            if (xs[k].empty()) continue;
            const auto ref = oracle::ridge(xs[k], rs[k]);
            for (std::size_t i = 0; i < kContextDim; ++i) CHECK(std::abs(b.state(a).theta[i] - ref[i]) < 1e-9);
        }
    }
}

TEST_CASE("ellipse membership is invariant under rigid motion of point and ellipse") {
    std::mt19937_64 rng(107);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 5000; ++i) {
        BlackSpotEllipse e{{500 * u(rng), 500 * u(rng)}, 20 + 80 * std::abs(u(rng)), 0, 1.5 * u(rng), 4};
        e.semi_minor = e.semi_major * (0.1 + 0.9 * std::abs(u(rng)));
        const Point2 p{e.center.x + 150 * u(rng), e.center.y + 150 * u(rng)};
        const Point2 shift{1000 * u(rng), 1000 * u(rng)};
        const double phi = 1.2 * u(rng);
        // Rotate both about the origin, then translate.
        auto move = [&](Point2 q) {
            return Point2{q.x * std::cos(phi) - q.y * std::sin(phi) + shift.x, q.x * std::sin(phi) + q.y * std::cos(phi) + shift.y};
        };
        BlackSpotEllipse moved = e;
        moved.center = move(e.center);
        moved.rotation = e.rotation + phi;
        const double n = oracle::unit_frame_norm_sq(p.x, p.y, e.center.x, e.center.y, e.semi_major, e.semi_minor, e.rotation);
        if (std::abs(n - 1.0) < 1e-9) continue;  // boundary: rounding may flip it
        CHECK(point_in_ellipse(p, e) == point_in_ellipse(move(p), moved));
    }
}

TEST_CASE("black-spot set shrinks as the threshold grows") {
    std::mt19937_64 rng(109);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::vector<Cluster> cs(40);
    for (auto& c : cs) c.rmse = u(rng);
    std::size_t prev = cs.size() + 1;
    for (double thr = 0.0; thr <= 10.0; thr += 0.25) {
        const auto spots = classify_black_spots(cs, thr);
        CHECK(spots.size() <= prev);
        for (const auto& s : spots) CHECK(s.rmse > thr);
        prev = spots.size();
    }
}

TEST_CASE("moving average stays within the window range") {
    std::mt19937_64 rng(113);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> v(200);
    for (auto& x : v) x = u(rng);
    for (int w : {1, 3, 20, 500}) {
        const auto ma = moving_average(v, w);
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::size_t lo = i + 1 >= static_cast<std::size_t>(w) ? i + 1 - static_cast<std::size_t>(w) : 0;
            const auto [mn, mx] = std::minmax_element(v.begin() + static_cast<long>(lo), v.begin() + static_cast<long>(i) + 1);
            CHECK(ma[i] >= *mn - 1e-12);
            CHECK(ma[i] <= *mx + 1e-12);
        }
        const int c = convergence_epoch(v, w);
        CHECK(c >= 1);
        CHECK(c <= static_cast<int>(v.size()));
    }
}

TEST_CASE("quantile is monotone in q and bounded by the sample") {
    std::mt19937_64 rng(127);
    std::normal_distribution<double> g(0.0, 3.0);
    std::vector<double> v(57);
    for (auto& x : v) x = g(rng);
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    double prev = -1e300;
    for (double q = 0.0; q <= 1.0; q += 0.01) {
        const double x = quantile(v, q);
        CHECK(x >= prev);
        CHECK(x >= *mn);
        CHECK(x <= *mx);
        prev = x;
    }
    CHECK(quantile(v, 0.0) == *mn);
    CHECK(quantile(v, 1.0) == *mx);
}

TEST_CASE("synthetic traces round trip through CSV for random scenarios") {
    std::mt19937_64 rng(131);
    for (int trial = 0; trial < 4; ++trial) {
        SyntheticScenarioConfig sc;
        sc.noise_seed = rng();
        sc.track_length = 1500;
        sc.planted_error_regions = trial;
        const auto t = generate_synthetic_trace(sc);
        CHECK_NOTHROW(t.validate());
        const auto back = parse_trace_string(serialize_trace(t));
        REQUIRE(back.snapshots.size() == t.snapshots.size());
        for (std::size_t i = 0; i < t.snapshots.size(); i += 17) {
            CHECK(back.snapshots[i].timestamp == doctest::Approx(t.snapshots[i].timestamp).epsilon(1e-12));
            CHECK(back.snapshots[i].cqi == t.snapshots[i].cqi);
            CHECK(back.snapshots[i].measured_rate.has_value() == t.snapshots[i].measured_rate.has_value());
        }
    }
}
