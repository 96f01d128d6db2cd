#include "bscb/schemes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bscb/error.hpp"

namespace bscb {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

SchemeDecision forced_tx() { return {Arm::Tx, true, false}; }

}  // namespace

double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t h = splitmix(splitmix(seed ^ splitmix(stream)) ^ index);
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

SchemeDecision periodic_step(const BufferState& buffer, double now, double interval) {
    if (!(interval > 0.0)) throw ConfigError("periodic: interval must be > 0");
    return {now - buffer.last_tx_time >= interval ? Arm::Tx : Arm::Idle, false, false};
}

void ProbabilisticConfig::validate() const {
    if (!(metric_max > metric_min)) throw ConfigError("probabilistic scheme: metric_max must exceed metric_min");
    if (!(gamma > 0.0)) throw ConfigError("probabilistic scheme: gamma must be > 0");
    if (time_exponent < 0.0) throw ConfigError("probabilistic scheme: time_exponent must be >= 0");
    if (!(dt_max > 0.0)) throw ConfigError("probabilistic scheme: dt_max must be > 0");
}

double transmission_probability(double metric, double buffer_age, const ProbabilisticConfig& cfg) {
    cfg.validate();
    const double quality = std::clamp((metric - cfg.metric_min) / (cfg.metric_max - cfg.metric_min), 0.0, 1.0);
    const double ramp = cfg.time_exponent == 0.0 ? 1.0 : std::pow(std::clamp(buffer_age / cfg.dt_max, 0.0, 1.0), cfg.time_exponent);
    return std::pow(quality, cfg.gamma) * ramp;
}

namespace {

SchemeDecision probabilistic_step(double metric, const BufferState& buffer, const ProbabilisticConfig& cfg, DrawStream& rng) {
    if (buffer.first_item_age >= cfg.dt_max) return forced_tx();
    const double p = transmission_probability(metric, buffer.first_item_age, cfg);
    // One draw per decision keeps the stream aligned regardless of p.
    const double u = rng.next();
    return {u < p ? Arm::Tx : Arm::Idle, false, false};
}

}  // namespace

SchemeDecision cat_step(double sinr, const BufferState& buffer, const ProbabilisticConfig& cfg, DrawStream& rng) {
    return probabilistic_step(sinr, buffer, cfg, rng);
}

SchemeDecision mlcat_step(double predicted_rate, const BufferState& buffer, const ProbabilisticConfig& cfg, DrawStream& rng) {
    return probabilistic_step(predicted_rate, buffer, cfg, rng);
}

QTableState::Index QTableState::bin(const ContextVector& normalized) {
    auto idx = [](double v, int bins) { return std::clamp(static_cast<int>(std::floor(v * bins)), 0, bins - 1); };
    return {idx(normalized[0], kRateBins), idx(normalized[1], kAgeBins)};
}

Arm QTableState::greedy(Index s) const { return at(s, Arm::Tx) >= at(s, Arm::Idle) ? Arm::Tx : Arm::Idle; }

void QTableState::validate() const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("q-table: epsilon must lie in [0, 1]");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) throw ConfigError("q-table: learning_rate must lie in (0, 1]");
    if (!(discount >= 0.0 && discount < 1.0)) throw ConfigError("q-table: discount must lie in [0, 1)");
    for (const auto& r : table)
        for (const auto& a : r)
            for (double v : a)
                if (!std::isfinite(v)) throw ConfigError("q-table: non-finite value");
}

SchemeDecision rlcat_step(const QTableState& q, const BanditContext& context, const BanditConfig& cfg, DrawStream& rng) {
    if (context.buffer_age >= cfg.dt_max) return forced_tx();
    const auto s = QTableState::bin(context.normalized(cfg));
    const double explore = rng.next();
    const double coin = rng.next();
    if (explore < q.epsilon) return {coin < 0.5 ? Arm::Tx : Arm::Idle, false, false};
    return {q.greedy(s), false, false};
}

void rlcat_update(QTableState& q, const QTransition& t) {
    if (!std::isfinite(t.reward)) throw ConfigError("q-learning: non-finite reward");
    const double future = t.terminal ? 0.0 : std::max(q.at(t.next_state, Arm::Tx), q.at(t.next_state, Arm::Idle));
    double& value = q.at(t.state, t.action);
    value += q.learning_rate * (t.reward + q.discount * future - value);
}

SchemeDecision bscb_step(const LinUcbBandit& bandit, const BanditContext& context, Point2 position, const BlackSpotMap& map,
                         const BufferState& buffer) {
    const bool inside = map.contains(position);
    if (buffer.first_item_age >= bandit.config().dt_max) return {Arm::Tx, true, inside};
    if (inside) return {Arm::Idle, false, true};
    return {bandit.select(context), false, false};
}

// ---------------------------------------------------------------------------

double Scheme::learn(const StepInput&, const SchemeDecision&, const StepOutcome&) { return kNaN; }

PeriodicScheme::PeriodicScheme(double interval) : interval_(interval) {
    if (!(interval > 0.0)) throw ConfigError("periodic: interval must be > 0");
}

SchemeDecision PeriodicScheme::decide(const StepInput& in) { return periodic_step(in.buffer, in.now, interval_); }

CatScheme::CatScheme(ProbabilisticConfig cfg, std::uint64_t seed, bool use_prediction)
    : cfg_(cfg), seed_(seed), use_prediction_(use_prediction), rng_(seed) {
    cfg_.validate();
}

void CatScheme::begin_epoch(int epoch) { rng_.reseed(splitmix(seed_ + static_cast<std::uint64_t>(epoch))); }

SchemeDecision CatScheme::decide(const StepInput& in) {
    return use_prediction_ ? mlcat_step(in.predicted_rate, in.buffer, cfg_, rng_) : cat_step(in.snapshot.sinr, in.buffer, cfg_, rng_);
}

double RlCatConfig::epsilon_at(int epoch) const {
    if (epsilon_decay_epochs <= 0) return epsilon_end;
    const double f = std::clamp(static_cast<double>(epoch) / epsilon_decay_epochs, 0.0, 1.0);
    return epsilon_start + (epsilon_end - epsilon_start) * f;
}

void RlCatConfig::validate() const {
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
        throw ConfigError("rlcat: epsilon must lie in [0, 1]");
    if (epsilon_decay_epochs < 0) throw ConfigError("rlcat: epsilon_decay_epochs must be >= 0");
}

RlCatScheme::RlCatScheme(BanditConfig reward_cfg, RlCatConfig cfg, std::uint64_t seed)
    : reward_cfg_(reward_cfg), cfg_(cfg), seed_(seed), rng_(seed) {
    reward_cfg_.validate();
    cfg_.validate();
    q_.epsilon = cfg_.epsilon_start;
    q_.learning_rate = cfg_.learning_rate;
    q_.discount = cfg_.discount;
    q_.validate();
}

void RlCatScheme::begin_epoch(int epoch) {
    q_.epsilon = cfg_.epsilon_at(epoch);
    rng_.reseed(splitmix(seed_ + static_cast<std::uint64_t>(epoch)));
    pending_.reset();
}

void RlCatScheme::end_epoch() {
    if (pending_) {
        pending_->terminal = true;
        rlcat_update(q_, *pending_);
        pending_.reset();
    }
}

SchemeDecision RlCatScheme::decide(const StepInput& in) {
    const BanditContext ctx{in.predicted_rate, in.buffer.first_item_age};
    const auto s = QTableState::bin(ctx.normalized(reward_cfg_));
    if (pending_) {
        pending_->next_state = s;
        rlcat_update(q_, *pending_);
        pending_.reset();
    }
    return rlcat_step(q_, ctx, reward_cfg_, rng_);
}

double RlCatScheme::learn(const StepInput& in, const SchemeDecision& decision, const StepOutcome& outcome) {
    const BanditContext ctx{in.predicted_rate, in.buffer.first_item_age};
    double reward = 0.0;
    if (decision.action == Arm::Tx) {
        const double rate = reward_cfg_.reward_rate_source == RewardRateSource::Measured ? outcome.achieved_rate : in.predicted_rate;
        reward = reward_tx(rate, in.buffer.first_item_age, reward_cfg_);
    } else {
        reward = reward_idle(in.buffer.first_item_age, reward_cfg_);
    }
    pending_ = QTransition{QTableState::bin(ctx.normalized(reward_cfg_)), decision.action, reward, {}, false};
    return reward;
}

nlohmann::json RlCatScheme::state_json() const {
    return {{"format", "bscb-qtable"}, {"version", 1}, {"epsilon", q_.epsilon}, {"learning_rate", q_.learning_rate},
            {"discount", q_.discount}, {"table", q_.table}};
}

void RlCatScheme::load_state(const nlohmann::json& doc) {
    if (doc.value("format", "") != "bscb-qtable") throw ConfigError("rlcat: not a q-table document");
    q_.table = doc.at("table").get<decltype(q_.table)>();
    q_.epsilon = doc.at("epsilon").get<double>();
    q_.learning_rate = doc.at("learning_rate").get<double>();
    q_.discount = doc.at("discount").get<double>();
    q_.validate();
}

BsCbScheme::BsCbScheme(BanditConfig cfg, std::shared_ptr<const BlackSpotMap> map, BlackSpotUpdates updates)
    : bandit_(cfg), map_(std::move(map)), updates_(updates) {
    if (!map_) throw ConfigError("bscb: a black-spot map is required (use an empty map for plain LinUCB)");
}

SchemeDecision BsCbScheme::decide(const StepInput& in) {
    return bscb_step(bandit_, {in.predicted_rate, in.buffer.first_item_age}, in.snapshot.position, *map_, in.buffer);
}

double BsCbScheme::learn(const StepInput& in, const SchemeDecision& decision, const StepOutcome& outcome) {
    const auto& cfg = bandit_.config();
    const BanditContext ctx{in.predicted_rate, in.buffer.first_item_age};
    if (decision.action == Arm::Tx) {
        const double rate = cfg.reward_rate_source == RewardRateSource::Measured ? outcome.achieved_rate : in.predicted_rate;
        const double r = reward_tx(rate, in.buffer.first_item_age, cfg);
        bandit_.update(Arm::Tx, ctx, r);
        return r;
    }
    if (decision.in_black_spot && updates_ == BlackSpotUpdates::Off) return kNaN;
    const double r = reward_idle(in.buffer.first_item_age, cfg);
    bandit_.update(Arm::Idle, ctx, r);
    return r;
}

}  // namespace bscb
