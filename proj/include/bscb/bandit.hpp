#pragma once

#include <array>
#include <filesystem>
#include <string>

#include <json.hpp>

namespace bscb {

enum class Arm { Idle = 0, Tx = 1 };
const char* to_string(Arm arm);

/// (S~/S_max, dt/dt_max, bias). The bias slot is 0 when the intercept is disabled, which leaves
/// the ridge solution in the first two coordinates identical to a plain two-feature model.
inline constexpr std::size_t kContextDim = 3;
using ContextVector = std::array<double, kContextDim>;
using ContextMatrix = std::array<std::array<double, kContextDim>, kContextDim>;

enum class RewardRateSource { Measured, Predicted };

struct BanditConfig {
    double delta = 0.1;
    double s_target = 20.0;  // S*, MBit/s
    double s_max = 30.0;     // MBit/s
    double dt_max = 120.0;   // s
    double w = 0.9;          // trade-off: 1 = data rate only
    double omega_punish = -1.0;
    RewardRateSource reward_rate_source = RewardRateSource::Measured;
    /// Constant feature so the reward offset -w S*/S_max is representable.
    bool intercept = true;

    /// 1 + sqrt(ln(2/delta)/2).
    double alpha() const;
    void validate() const;
};

double alpha_from_delta(double delta);

/// Raw context (S~(t), dt) before normalization.
struct BanditContext {
    double predicted_rate = 0.0;  // MBit/s
    double buffer_age = 0.0;      // s

    /// (S~/S_max, dt/dt_max) each clamped to [0, 1.5], then the bias (1, or 0 without intercept).
    ContextVector normalized(const BanditConfig& cfg) const;
};

/// Ridge-regression state of one arm: A = I + sum x x^T, b = sum r x, theta = A^-1 b.
struct ArmState {
    ContextMatrix A = identity();
    ContextVector b{};
    ContextVector theta{};
    ContextMatrix A_inv = identity();
    std::size_t updates = 0;

    double estimate(const ContextVector& x) const;
    /// x^T A^-1 x
    double width_sq(const ContextVector& x) const;
    double ucb(const ContextVector& x, double alpha) const;

    static ContextMatrix identity();
};

/// Upper confidence score per arm for the normalized context.
double arm_score(const ArmState& state, const ContextVector& x, double alpha);

/// argmax of theta^T x + alpha sqrt(x^T A^-1 x); ties go to Tx.
Arm select_arm(const ArmState& idle, const ArmState& tx, const ContextVector& x, double alpha);
Arm select_arm(const ArmState& idle, const ArmState& tx, const BanditContext& context, const BanditConfig& cfg);

/// A += x x^T, b += r x, theta = A^-1 b. Throws on non-finite reward.
void update_arm(ArmState& state, const ContextVector& x, double reward);

double reward_tx(double rate, double buffer_age, const BanditConfig& cfg);
double reward_idle(double buffer_age, const BanditConfig& cfg);

/// Two-arm LinUCB learner.
class LinUcbBandit {
public:
    LinUcbBandit() = default;
    explicit LinUcbBandit(BanditConfig cfg);

    Arm select(const BanditContext& context) const;
    void update(Arm arm, const BanditContext& context, double reward);

    const ArmState& state(Arm arm) const { return arms_[static_cast<std::size_t>(arm)]; }
    ArmState& state(Arm arm) { return arms_[static_cast<std::size_t>(arm)]; }
    const BanditConfig& config() const { return cfg_; }
    void reset();

private:
    BanditConfig cfg_;
    double alpha_ = alpha_from_delta(0.1);
    std::array<ArmState, 2> arms_{};
};

nlohmann::json bandit_config_to_json(const BanditConfig& cfg);
BanditConfig bandit_config_from_json(const nlohmann::json& doc);
nlohmann::json bandit_to_json(const LinUcbBandit& bandit);
/// Restores A and b per arm; theta and A^-1 are recomputed.
LinUcbBandit bandit_from_json(const nlohmann::json& doc);
void save_bandit(const LinUcbBandit& bandit, const std::filesystem::path& path);
LinUcbBandit load_bandit(const std::filesystem::path& path);

}  // namespace bscb
