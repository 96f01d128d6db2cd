#include "bscb/bandit.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <fstream>

#include "bscb/error.hpp"

namespace bscb {

namespace {

constexpr double kContextClamp = 1.5;

double determinant(const ContextMatrix& a) {
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

void refresh(ArmState& s) {
    const auto& a = s.A;
    const double det = determinant(a);
    // A = I + sum x x^T has eigenvalues >= 1.
    assert(det >= 1.0 - 1e-9);
    // Adjugate via cyclic cofactors.
    for (std::size_t i = 0; i < kContextDim; ++i)
        for (std::size_t j = 0; j < kContextDim; ++j) {
            const std::size_t r0 = (j + 1) % 3, r1 = (j + 2) % 3, c0 = (i + 1) % 3, c1 = (i + 2) % 3;
            s.A_inv[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / det;
        }
    for (std::size_t i = 0; i < kContextDim; ++i) {
        s.theta[i] = 0.0;
        for (std::size_t j = 0; j < kContextDim; ++j) s.theta[i] += s.A_inv[i][j] * s.b[j];
    }
}

}  // namespace

const char* to_string(Arm arm) { return arm == Arm::Tx ? "TX" : "IDLE"; }

double alpha_from_delta(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("bandit: delta must lie in (0, 1)");
    return 1.0 + std::sqrt(std::log(2.0 / delta) / 2.0);
}

double BanditConfig::alpha() const { return alpha_from_delta(delta); }

void BanditConfig::validate() const {
    alpha_from_delta(delta);
    if (!(s_max > 0.0)) throw ConfigError("bandit: s_max must be > 0");
    if (!(dt_max > 0.0)) throw ConfigError("bandit: dt_max must be > 0");
    if (!(s_target >= 0.0)) throw ConfigError("bandit: s_target must be >= 0");
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("bandit: w must lie in [0, 1]");
    if (!(omega_punish <= 0.0)) throw ConfigError("bandit: omega_punish must be <= 0");
}

ContextVector BanditContext::normalized(const BanditConfig& cfg) const {
    return {std::clamp(predicted_rate / cfg.s_max, 0.0, kContextClamp), std::clamp(buffer_age / cfg.dt_max, 0.0, kContextClamp),
            cfg.intercept ? 1.0 : 0.0};
}

ContextMatrix ArmState::identity() {
    ContextMatrix m{};
    for (std::size_t i = 0; i < kContextDim; ++i) m[i][i] = 1.0;
    return m;
}

double ArmState::estimate(const ContextVector& x) const {
    double e = 0.0;
    for (std::size_t i = 0; i < kContextDim; ++i) e += theta[i] * x[i];
    return e;
}

double ArmState::width_sq(const ContextVector& x) const {
    double w = 0.0;
    for (std::size_t i = 0; i < kContextDim; ++i)
        for (std::size_t j = 0; j < kContextDim; ++j) w += x[i] * A_inv[i][j] * x[j];
    return w;
}

double ArmState::ucb(const ContextVector& x, double alpha) const { return alpha * std::sqrt(std::max(0.0, width_sq(x))); }

double arm_score(const ArmState& state, const ContextVector& x, double alpha) { return state.estimate(x) + state.ucb(x, alpha); }

Arm select_arm(const ArmState& idle, const ArmState& tx, const ContextVector& x, double alpha) {
    return arm_score(tx, x, alpha) >= arm_score(idle, x, alpha) ? Arm::Tx : Arm::Idle;
}

Arm select_arm(const ArmState& idle, const ArmState& tx, const BanditContext& context, const BanditConfig& cfg) {
    return select_arm(idle, tx, context.normalized(cfg), cfg.alpha());
}

void update_arm(ArmState& state, const ContextVector& x, double reward) {
    if (!std::isfinite(reward)) throw ConfigError("bandit: non-finite reward");
    for (std::size_t i = 0; i < kContextDim; ++i) {
        for (std::size_t j = 0; j < kContextDim; ++j) state.A[i][j] += x[i] * x[j];
        state.b[i] += reward * x[i];
    }
    ++state.updates;
    refresh(state);
}

double reward_tx(double rate, double buffer_age, const BanditConfig& cfg) {
    return cfg.w * (rate - cfg.s_target) / cfg.s_max + buffer_age * (1.0 - cfg.w) / cfg.dt_max;
}

double reward_idle(double buffer_age, const BanditConfig& cfg) { return buffer_age >= cfg.dt_max ? cfg.omega_punish : 0.0; }

LinUcbBandit::LinUcbBandit(BanditConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    alpha_ = cfg_.alpha();
}

Arm LinUcbBandit::select(const BanditContext& context) const {
    return select_arm(state(Arm::Idle), state(Arm::Tx), context.normalized(cfg_), alpha_);
}

void LinUcbBandit::update(Arm arm, const BanditContext& context, double reward) {
    update_arm(state(arm), context.normalized(cfg_), reward);
}

void LinUcbBandit::reset() { arms_ = {}; }

nlohmann::json bandit_config_to_json(const BanditConfig& cfg) {
    return {{"delta", cfg.delta},
            {"alpha", cfg.alpha()},
            {"s_target", cfg.s_target},
            {"s_max", cfg.s_max},
            {"dt_max", cfg.dt_max},
            {"w", cfg.w},
            {"omega_punish", cfg.omega_punish},
            {"reward_rate_source", cfg.reward_rate_source == RewardRateSource::Measured ? "measured" : "predicted"},
            {"intercept", cfg.intercept}};
}

BanditConfig bandit_config_from_json(const nlohmann::json& doc) {
    BanditConfig cfg;
    cfg.delta = doc.at("delta").get<double>();
    cfg.s_target = doc.at("s_target").get<double>();
    cfg.s_max = doc.at("s_max").get<double>();
    cfg.dt_max = doc.at("dt_max").get<double>();
    cfg.w = doc.at("w").get<double>();
    cfg.omega_punish = doc.at("omega_punish").get<double>();
    const auto src = doc.value("reward_rate_source", std::string("measured"));
    if (src != "measured" && src != "predicted") throw ConfigError("bandit: unknown reward_rate_source '" + src + "'");
    cfg.reward_rate_source = src == "measured" ? RewardRateSource::Measured : RewardRateSource::Predicted;
    cfg.intercept = doc.value("intercept", true);
    cfg.validate();
    return cfg;
}

nlohmann::json bandit_to_json(const LinUcbBandit& bandit) {
    nlohmann::json arms = nlohmann::json::object();
    for (Arm arm : {Arm::Idle, Arm::Tx}) {
        const auto& s = bandit.state(arm);
        arms[to_string(arm)] = {{"A", s.A}, {"b", s.b}, {"updates", s.updates}};
    }
    return {{"format", "bscb-bandit"}, {"version", 1}, {"config", bandit_config_to_json(bandit.config())}, {"arms", arms}};
}

LinUcbBandit bandit_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "bscb-bandit") throw ConfigError("bandit: not a bandit state document");
    LinUcbBandit bandit(bandit_config_from_json(doc.at("config")));
    for (Arm arm : {Arm::Idle, Arm::Tx}) {
        const auto& a = doc.at("arms").at(to_string(arm));
        auto& s = bandit.state(arm);
        s.A = a.at("A").get<ContextMatrix>();
        s.b = a.at("b").get<ContextVector>();
        s.updates = a.value("updates", std::size_t{0});
        bool symmetric = true;
        for (std::size_t i = 0; i < kContextDim; ++i)
            for (std::size_t j = 0; j < i; ++j)
                symmetric = symmetric && std::abs(s.A[i][j] - s.A[j][i]) <= 1e-9 * std::max(1.0, std::abs(s.A[i][j]));
        // Sylvester's criterion on the leading minors.
        const double minor2 = s.A[0][0] * s.A[1][1] - s.A[0][1] * s.A[1][0];
        if (!symmetric || s.A[0][0] < 1.0 || minor2 <= 0.0 || determinant(s.A) < 1.0 - 1e-9)
            throw ConfigError("bandit: stored A is not symmetric positive definite with eigenvalues >= 1");
        refresh(s);
    }
    return bandit;
}

void save_bandit(const LinUcbBandit& bandit, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write bandit state: " + path.string());
    out << bandit_to_json(bandit).dump(2) << '\n';
}

LinUcbBandit load_bandit(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open bandit state: " + path.string());
    return bandit_from_json(nlohmann::json::parse(in));
}

}  // namespace bscb
