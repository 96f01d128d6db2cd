// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bscb/experiment.hpp"
#include "oracles.hpp"

using namespace bscb;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ExperimentConfig scenario(const char* name) {
    return ExperimentConfig::from_file(fs::path(BSCB_SOURCE_DIR) / "configs" / name);
}

// ---------------------------------------------------------------------------

Outcome linucb_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.0, 1.5);
    std::normal_distribution<double> g(0.0, 1.0);
    BanditConfig cfg;
    cfg.s_max = 1.0;
    cfg.dt_max = 1.0;
    LinUcbBandit bandit(cfg);
    std::vector<std::vector<double>> xs[2];
    std::vector<double> rs[2];
    for (int i = 0; i < 10000; ++i) {
        const BanditContext c{u(rng), u(rng)};
        const Arm a = (rng() & 1u) ? Arm::Tx : Arm::Idle;
        const double r = g(rng);
        bandit.update(a, c, r);
        const auto x = c.normalized(cfg);
        xs[static_cast<int>(a)].push_back({x[0], x[1], x[2]});
        rs[static_cast<int>(a)].push_back(r);
    }
    const double elapsed = seconds_since(t0);
    double err = 0.0;
    for (Arm a : {Arm::Idle, Arm::Tx}) {
        const auto ref = oracle::ridge(xs[static_cast<int>(a)], rs[static_cast<int>(a)]);
        for (std::size_t i = 0; i < kContextDim; ++i) err = std::max(err, std::abs(bandit.state(a).theta[i] - ref[i]));
    }
    return {err <= 1e-9 && elapsed < 1.0, fmt("max |theta - ridge| = %.3g, %.3f s", err, elapsed)};
}

Outcome alpha_formula() {
    const double a = alpha_from_delta(0.1);
    return {std::abs(a - 2.22389) <= 1e-5, fmt("alpha(0.1) = %.7f, required 2.22389 +/- 1e-5, gap %.2e", a, std::abs(a - 2.22389))};
}

Outcome reward_boundaries() {
    BanditConfig c;  // Omega -1, dt_max 120
    const bool idle = reward_idle(120.0, c) == -1.0 && reward_idle(119.999, c) == 0.0;
    c.s_target = 12;
    c.s_max = 35;
    c.w = 0.8;
    double worst = 0.0;
    const double h = 0.25;
    for (double s : {0.0, 10.0, 30.0})
        for (double dt : {0.0, 50.0, 110.0}) {
            worst = std::max(worst, std::abs((reward_tx(s + h, dt, c) - reward_tx(s, dt, c)) / h - c.w / c.s_max));
            worst = std::max(worst, std::abs((reward_tx(s, dt + h, c) - reward_tx(s, dt, c)) / h - (1 - c.w) / c.dt_max));
        }
    return {idle && worst <= 1e-12, fmt("r_idle(120) = %g, r_idle(119.999) = %g, slope error %.2g", reward_idle(120.0, BanditConfig{}),
                                        reward_idle(119.999, BanditConfig{}), worst)};
}

Outcome ellipse_membership() {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int disagreements = 0, banded = 0;
    for (int i = 0; i < 10000; ++i) {
        BlackSpotEllipse e{{1000 * u(rng), 1000 * u(rng)}, 10 + 190 * std::abs(u(rng)), 0, 1.5707963 * u(rng), 5};
        e.semi_minor = e.semi_major * (0.05 + 0.95 * std::abs(u(rng)));
        const Point2 p{e.center.x + 1.3 * e.semi_major * u(rng), e.center.y + 1.3 * e.semi_major * u(rng)};
        const double n = oracle::unit_frame_norm_sq(p.x, p.y, e.center.x, e.center.y, e.semi_major, e.semi_minor, e.rotation);
        if (std::abs(n - 1.0) <= 1e-9) {
            ++banded;
            continue;
        }
        if (point_in_ellipse(p, e) != (n <= 1.0)) ++disagreements;
    }
    return {disagreements == 0, fmt("%d disagreements in 10000 pairs (%d inside the boundary band)", disagreements, banded)};
}

Outcome kmeans_checks() {
    int increases = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0, 500);
        std::vector<Point2> pts(60 + seed % 90);
        for (auto& p : pts) p = {u(rng), u(rng)};
        const auto r = kmeans(pts, 2 + seed % 9, seed);
        for (std::size_t i = 1; i < r.inertia_trace.size(); ++i)
            if (r.inertia_trace[i] > r.inertia_trace[i - 1]) ++increases;
    }
    int mismatches = 0;
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        std::mt19937_64 rng(1000 + seed);
        std::normal_distribution<double> g(0.0, 8.0);
        const std::size_t n = 6 + seed % 7;  // 6..12 points
        std::vector<Point2> pts;
        std::vector<oracle::Pt> op;
        for (std::size_t i = 0; i < n; ++i) {
            const double ox = i % 2 ? 100.0 : 0.0;
            pts.push_back({ox + g(rng), g(rng)});
            op.push_back({pts.back().x, pts.back().y});
        }
        const unsigned mask = oracle::best_two_partition(op);
        const auto r = kmeans(pts, 2, seed);
        for (std::size_t i = 0; i < n; ++i)
            if ((r.assignment[i] != r.assignment[0]) != (((mask >> i) & 1u) != 0)) {
                ++mismatches;
                break;
            }
    }
    return {increases == 0 && mismatches == 0,
            fmt("%d inertia increases over 100 runs, %d of 30 two-blob sets differ from the exhaustive optimum", increases, mismatches)};
}

Outcome tradeoff() {
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = scenario("stationary.toml");
    cfg.scheme = "bscb";
    const std::vector<std::string> grid{"0.5", "0.6", "0.7", "0.8", "0.9", "1.0"};
    const auto pts = run_sweep(cfg, "bandit.w", grid);
    std::vector<double> w, es, ea;
    for (const auto& p : pts) {
        w.push_back(std::stod(p.value));
        es.push_back(p.e_s);
        ea.push_back(p.e_aoi);
    }
    int es_steps = 0, ea_steps = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        es_steps += es[i] >= es[i - 1];
        ea_steps += ea[i] <= ea[i - 1];
    }
    const double rho_s = spearman(w, es), rho_a = spearman(w, ea);
    const double elapsed = seconds_since(t0);
    std::string series;
    for (std::size_t i = 0; i < pts.size(); ++i) series += fmt(" %s:%.3f/%.3f", pts[i].value.c_str(), es[i], ea[i]);
    const bool ok = rho_s >= 0.8 && rho_a <= -0.8 && es_steps >= 4 && ea_steps >= 4 && elapsed < 120.0;
    return {ok, fmt("rho(E_S) = %.2f, rho(E_AoI) = %.2f, monotone steps %d/5 and %d/5, %.1f s; w:E_S/E_AoI", rho_s, rho_a, es_steps,
                    ea_steps, elapsed) + series};
}

struct TrainedRun {
    TrainingReport report;
    double snapshot_interval = 0.0;
};

Outcome convergence(TrainedRun& bscb_run) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = scenario("stationary.toml");
    const auto wb = prepare(cfg);
    auto bscb = make_scheme("bscb", wb);
    bscb_run.report = run_training(wb.eval, *bscb, *wb.predictor, wb.replay, cfg.epochs, nullptr, EventLogMode::None);
    bscb_run.snapshot_interval = cfg.synthetic.snapshot_interval;
    auto rlcat = make_scheme("rlcat", wb);
    const auto rl = run_training(wb.eval, *rlcat, *wb.predictor, wb.replay, cfg.epochs, nullptr, EventLogMode::None);
    const double elapsed = seconds_since(t0);
    const int cb = bscb_run.report.convergence_epoch, cq = rl.convergence_epoch;
    return {cb <= 300 && cq > cb && elapsed < 300.0,
            fmt("BS-CB reaches 95%% of its final moving average at epoch %d, Q-learning at %d (%d epochs, %.1f s)", cb, cq, cfg.epochs, elapsed)};
}

struct SchemeMeans {
    double rate = 0, prbs = 0, energy = 0, aoi = 0, max_aoi = 0;
};

std::map<std::string, SchemeMeans> scheme_means;  // filled by ordering(), reused by aoi_cost()

Outcome ordering() {
    const auto base = scenario("stationary.toml");
    const int seeds = 5;
    for (int seed = 1; seed <= seeds; ++seed) {
        auto cfg = base;
        cfg.seed = static_cast<std::uint64_t>(seed);
        const auto wb = prepare(cfg);
        for (const char* name : {"periodic", "cat", "mlcat", "bscb"}) {
            auto s = make_scheme(name, wb);
            const auto rep = run_training(wb.eval, *s, *wb.predictor, wb.replay, s->learns() ? cfg.epochs : 1, nullptr, EventLogMode::None);
            // Learners are scored on their final (trained) epoch.
            const auto& e = rep.epochs.back();
            auto& m = scheme_means[name];
            m.rate += e.mean_data_rate / seeds;
            m.prbs += static_cast<double>(e.total_prbs) / seeds;
            m.energy += e.total_energy / seeds;
            m.aoi += e.mean_aoi / seeds;
            for (const auto& ep : rep.epochs) m.max_aoi = std::max(m.max_aoi, ep.max_aoi);
        }
    }
    const auto& p = scheme_means["periodic"];
    const auto& c = scheme_means["cat"];
    const auto& m = scheme_means["mlcat"];
    const auto& b = scheme_means["bscb"];
    const bool rates = b.rate >= m.rate && m.rate >= c.rate && c.rate >= p.rate && b.rate >= 1.5 * p.rate;
    const bool prbs = b.prbs <= 0.5 * p.prbs;
    const bool energy = b.energy <= p.energy;
    return {rates && prbs && energy,
            fmt("rate P %.2f, CAT %.2f, ML-CAT %.2f, BS-CB %.2f MBit/s (x%.2f); PRB ratio %.3f; energy %.0f vs %.0f J", p.rate, c.rate,
                m.rate, b.rate, b.rate / p.rate, b.prbs / p.prbs, b.energy, p.energy)};
}

Outcome aoi_cost(const TrainedRun& run) {
    const auto& p = scheme_means["periodic"];
    const auto& b = scheme_means["bscb"];
    double max_aoi = b.max_aoi;
    for (const auto& e : run.report.epochs) max_aoi = std::max(max_aoi, e.max_aoi);
    const double bound = BanditConfig{}.dt_max + run.snapshot_interval;
    return {b.aoi > p.aoi && max_aoi <= bound,
            fmt("mean AoI BS-CB %.1f s vs periodic %.1f s; max AoI %.1f s (bound %.1f s)", b.aoi, p.aoi, max_aoi, bound)};
}

Outcome black_spots() {
    const auto cfg = scenario("blackspots.toml");
    const auto wb = prepare(cfg);
    const auto runs = black_spot_statistics(wb.eval, *wb.black_spots);
    std::vector<double> d;
    for (const auto& r : runs) d.push_back(r.distance);
    const double median = d.empty() ? std::numeric_limits<double>::quiet_NaN() : quantile(d, 0.5);
    auto s = make_scheme("bscb", wb);
    const auto rep = run_training(wb.eval, *s, *wb.predictor, wb.replay, cfg.epochs, nullptr, EventLogMode::None);
    int inside = 0, forced_inside = 0;
    for (const auto& e : rep.epochs) inside += e.blackspot_tx_count;
    // Cross-check the counter against the event log of the final epoch.
    std::vector<Event> ev;
    replay_epoch(wb.eval, *s, *wb.predictor, wb.replay, cfg.epochs, &ev);
    for (const auto& e : ev)
        if (e.in_blackspot && e.action == EventAction::Tx) (e.forced ? forced_inside : inside) += 1;
    const bool ok = !d.empty() && median >= 50.0 && median <= 150.0 && inside == 0;
    return {ok, fmt("%zu ellipses, %zu runs, median distance %.1f m; %d unforced TX inside black spots (%d forced) over %d epochs",
                    wb.black_spots->ellipses().size(), runs.size(), median, inside, forced_inside, cfg.epochs + 1)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
#ifndef BSCB_CLI
    return {false, "CLI not built"};
#else
    const fs::path root = fs::temp_directory_path() / "bscb_acceptance_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const std::string cli = BSCB_CLI;
    const std::string common = " --set synthetic.laps=1 --set forest.tree_count=10 --set experiment.epochs=10";
    auto sh = [&](const std::string& args) { return std::system((cli + args + " > /dev/null 2>&1").c_str()) == 0; };
    const std::string model = (root / "tp" / "model.json").string();
    const std::string map = (root / "bs" / "blackspots.json").string();
    const std::vector<std::pair<std::string, std::string>> runs{
        {"tp", common + " train-predictor"},
        {"bs", common + " build-blackspots --model " + model},
        {"sim", common + " simulate --model " + model + " --map " + map},
        {"per", common + " --set experiment.scheme=periodic simulate --model " + model + " --map " + map},
        {"sw", common + " sweep --model " + model + " --map " + map + " --param bandit.w --values 0.6,1.0"},
        {"rep", " report " + (root / "sim").string() + " " + (root / "per").string()},
    };
    int files = 0, differing = 0, failed = 0;
    for (const auto& [dir, args] : runs) {
        if (!sh(" --out " + (root / dir).string() + args)) {
            ++failed;
            continue;
        }
        const fs::path again = root / (dir + "_rerun");
        const auto recorded = nlohmann::json::parse(slurp(root / dir / "run.json"));
        if (!sh(" --config " + (root / dir / "run.json").string() + " --out " + again.string() + " " +
                recorded.at("command").get<std::string>())) {
            ++failed;
            continue;
        }
        for (const auto& entry : fs::directory_iterator(root / dir)) {
            ++files;
            const auto other = again / entry.path().filename();
            if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) ++differing;
        }
    }
    return {failed == 0 && differing == 0 && files > 0,
            fmt("%zu commands, %d files compared, %d differ, %d invocations failed", runs.size(), files, differing, failed)};
#endif
}

}  // namespace

int main() {
    TrainedRun bscb_run;
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, linucb_oracle},
        {2, alpha_formula},
        {3, reward_boundaries},
        {4, ellipse_membership},
        {5, kmeans_checks},
        {6, tradeoff},
        {7, [&] { return convergence(bscb_run); }},
        {8, ordering},
        {9, [&] { return aoi_cost(bscb_run); }},
        {10, black_spots},
        {11, determinism},
    };
    int failures = 0;
    for (const auto& [id, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    return failures == 0 ? 0 : 1;
}
