#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "bscb/bandit.hpp"
#include "bscb/blackspot.hpp"
#include "bscb/trace.hpp"

namespace bscb {

struct BufferState {
    double buffered_bytes = 0.0;
    double first_item_age = 0.0;  // s, age of the oldest unsent byte
    double last_tx_time = 0.0;    // s
};

struct SchemeDecision {
    Arm action = Arm::Idle;
    bool forced_by_deadline = false;
    bool in_black_spot = false;
};

/// Counter-based uniform draw in [0, 1): a pure function of (seed, stream, index).
double uniform_draw(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

/// Deterministic RNG with an explicit position, so scheme state serializes exactly.
class DrawStream {
public:
    explicit DrawStream(std::uint64_t seed = 0) : seed_(seed) {}
    double next() { return uniform_draw(seed_, 0, counter_++); }
    std::uint64_t seed() const { return seed_; }
    std::uint64_t position() const { return counter_; }
    void reseed(std::uint64_t seed) {
        seed_ = seed;
        counter_ = 0;
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

SchemeDecision periodic_step(const BufferState& buffer, double now, double interval);

/// Parameters of the probabilistic channel-aware schemes.
struct ProbabilisticConfig {
    double metric_min = -5.0;  // anchor mapped to probability 0
    double metric_max = 25.0;  // anchor mapped to probability 1
    double gamma = 2.0;
    /// Elapsed-time ramp (dt/dt_max)^time_exponent; 0 disables the ramp.
    double time_exponent = 1.0;
    double dt_max = 120.0;

    void validate() const;
};

/// clamp((metric - min)/(max - min), 0, 1)^gamma * (dt/dt_max)^time_exponent.
double transmission_probability(double metric, double buffer_age, const ProbabilisticConfig& cfg);

/// SINR-driven probabilistic access; TX forced once the buffer age reaches dt_max.
SchemeDecision cat_step(double sinr, const BufferState& buffer, const ProbabilisticConfig& cfg, DrawStream& rng);
/// Same mechanism driven by the predicted data rate.
SchemeDecision mlcat_step(double predicted_rate, const BufferState& buffer, const ProbabilisticConfig& cfg, DrawStream& rng);

struct QTableState {
    static constexpr int kRateBins = 10;
    static constexpr int kAgeBins = 12;
    // [rate bin][age bin][action]
    std::array<std::array<std::array<double, 2>, kAgeBins>, kRateBins> table{};
    double epsilon = 0.3;
    double learning_rate = 0.1;
    double discount = 0.9;

    struct Index {
        int rate = 0;
        int age = 0;
        friend bool operator==(const Index&, const Index&) = default;
    };
    /// Equal-width bins over [0, 1] of the normalized context; values above 1 land in the last bin.
    static Index bin(const ContextVector& normalized);
    double& at(Index s, Arm a) { return table[s.rate][s.age][static_cast<std::size_t>(a)]; }
    double at(Index s, Arm a) const { return table[s.rate][s.age][static_cast<std::size_t>(a)]; }
    Arm greedy(Index s) const;  // ties go to Tx
    void validate() const;
};

struct QTransition {
    QTableState::Index state;
    Arm action = Arm::Idle;
    double reward = 0.0;
    QTableState::Index next_state;
    bool terminal = false;
};

SchemeDecision rlcat_step(const QTableState& q, const BanditContext& context, const BanditConfig& cfg, DrawStream& rng);
/// Q <- Q + lr (r + discount max_a' Q(s', a') - Q); the bootstrap term is dropped for terminal transitions.
void rlcat_update(QTableState& q, const QTransition& transition);

enum class BlackSpotUpdates { Off, IdleReward };

/// Deadline first, then black-spot avoidance, then the bandit's arm selection.
SchemeDecision bscb_step(const LinUcbBandit& bandit, const BanditContext& context, Point2 position, const BlackSpotMap& map,
                         const BufferState& buffer);

// ---------------------------------------------------------------------------
// Polymorphic scheme interface used by the replay engine.

struct StepInput {
    const ContextSnapshot& snapshot;
    double now = 0.0;
    double predicted_rate = 0.0;
    BufferState buffer;
};

struct StepOutcome {
    bool transmitted = false;
    double achieved_rate = 0.0;  // MBit/s, only when transmitted
    bool final_step = false;
};

class Scheme {
public:
    virtual ~Scheme() = default;
    virtual std::string name() const = 0;
    virtual SchemeDecision decide(const StepInput& in) = 0;
    /// Learning feedback after the decision took effect; returns the reward used (NaN when none).
    virtual double learn(const StepInput& in, const SchemeDecision& decision, const StepOutcome& outcome);
    virtual void begin_epoch(int epoch) { (void)epoch; }
    virtual void end_epoch() {}
    virtual bool learns() const { return false; }
    virtual nlohmann::json state_json() const { return nlohmann::json::object(); }
    virtual void load_state(const nlohmann::json& doc) { (void)doc; }
};

class PeriodicScheme final : public Scheme {
public:
    explicit PeriodicScheme(double interval);
    std::string name() const override { return "periodic"; }
    SchemeDecision decide(const StepInput& in) override;

private:
    double interval_;
};

class CatScheme final : public Scheme {
public:
    CatScheme(ProbabilisticConfig cfg, std::uint64_t seed, bool use_prediction);
    std::string name() const override { return use_prediction_ ? "mlcat" : "cat"; }
    SchemeDecision decide(const StepInput& in) override;
    void begin_epoch(int epoch) override;

private:
    ProbabilisticConfig cfg_;
    std::uint64_t seed_;
    bool use_prediction_;
    DrawStream rng_;
};

struct RlCatConfig {
    double epsilon_start = 0.3;
    double epsilon_end = 0.02;
    int epsilon_decay_epochs = 400;
    double learning_rate = 0.1;
    double discount = 0.9;

    double epsilon_at(int epoch) const;
    void validate() const;
};

class RlCatScheme final : public Scheme {
public:
    RlCatScheme(BanditConfig reward_cfg, RlCatConfig cfg, std::uint64_t seed);
    std::string name() const override { return "rlcat"; }
    SchemeDecision decide(const StepInput& in) override;
    double learn(const StepInput& in, const SchemeDecision& decision, const StepOutcome& outcome) override;
    void begin_epoch(int epoch) override;
    void end_epoch() override;
    bool learns() const override { return true; }
    nlohmann::json state_json() const override;
    void load_state(const nlohmann::json& doc) override;
    const QTableState& table() const { return q_; }

private:
    BanditConfig reward_cfg_;
    RlCatConfig cfg_;
    std::uint64_t seed_;
    QTableState q_;
    DrawStream rng_;
    std::optional<QTransition> pending_;
};

class BsCbScheme final : public Scheme {
public:
    BsCbScheme(BanditConfig cfg, std::shared_ptr<const BlackSpotMap> map, BlackSpotUpdates updates = BlackSpotUpdates::Off);
    std::string name() const override { return "bscb"; }
    SchemeDecision decide(const StepInput& in) override;
    double learn(const StepInput& in, const SchemeDecision& decision, const StepOutcome& outcome) override;
    bool learns() const override { return true; }
    nlohmann::json state_json() const override { return bandit_to_json(bandit_); }
    void load_state(const nlohmann::json& doc) override { bandit_ = bandit_from_json(doc); }
    const LinUcbBandit& bandit() const { return bandit_; }
    LinUcbBandit& bandit() { return bandit_; }

private:
    LinUcbBandit bandit_;
    std::shared_ptr<const BlackSpotMap> map_;
    BlackSpotUpdates updates_;
};

}  // namespace bscb
