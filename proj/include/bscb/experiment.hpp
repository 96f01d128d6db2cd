#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscb/bandit.hpp"
#include "bscb/blackspot.hpp"
#include "bscb/metrics.hpp"
#include "bscb/predictor.hpp"
#include "bscb/schemes.hpp"
#include "bscb/sim.hpp"
#include "bscb/trace.hpp"

namespace bscb {

inline constexpr const char* kVersion = "0.1.0";

/// Flat "section.key" -> raw value text.
using KeyValues = std::map<std::string, std::string>;

/// Parses the TOML subset used by experiment files: [section] headers, `key = value` lines,
/// '#' comments, quoted strings, numbers and booleans.
KeyValues parse_config_text(const std::string& text);
KeyValues parse_config_file(const std::filesystem::path& path);
std::string format_config_text(const KeyValues& kv);

/// Default RMSE threshold per operator (A, B, C); throws for unknown ids.
double default_rmse_max(const std::string& mno_id);

struct ExperimentConfig {
    std::string scheme = "bscb";
    int epochs = 500;
    std::uint64_t seed = 1;
    std::string predictor = "forest";  // forest | oracle
    double oracle_sigma = 1.0;

    // Empty paths select the synthetic generator.
    std::string train_trace;
    std::string validation_trace;
    std::string eval_trace;

    SyntheticScenarioConfig synthetic;
    ForestConfig forest;
    BlackSpotConfig blackspot;
    BlackSpotUpdates blackspot_updates = BlackSpotUpdates::Off;
    BanditConfig bandit;
    /// S* and S_max from label quantiles of the training trace.
    bool derive_targets = true;
    double target_quantile = 0.9;
    double max_quantile = 0.99;

    double periodic_interval = 10.0;
    ProbabilisticConfig cat{-5.0, 25.0, 2.0, 1.0, 120.0};
    ProbabilisticConfig mlcat{0.0, 0.0, 2.0, 1.0, 120.0};  // metric_max 0 -> S_max
    RlCatConfig rlcat;

    double source_rate = 5.0e4;
    ChannelRealizationModel channel;
    int bandwidth_prbs = 50;
    std::string power_model;  // JSON file, empty = built-in
    std::string tbs_table;    // JSON file, empty = built-in
    double idle_power_w = 0.05;

    ExperimentConfig();

    /// Applies overrides; unknown keys and malformed values raise ConfigError naming the key.
    void apply(const KeyValues& kv);
    KeyValues to_key_values() const;
    void validate() const;

    static ExperimentConfig from_file(const std::filesystem::path& path);
};

/// Everything a scheme run needs, derived from one configuration.
struct Workbench {
    ExperimentConfig cfg;
    DriveTrace train;
    DriveTrace validation;
    DriveTrace eval;
    std::shared_ptr<const ForestModel> forest;
    std::shared_ptr<const RatePredictor> predictor;
    std::shared_ptr<const BlackSpotMap> black_spots;
    std::vector<Cluster> clusters;
    BanditConfig bandit;  // with resolved S* and S_max
    ReplayConfig replay;
};

std::vector<DriveTrace> load_traces(const ExperimentConfig& cfg);  // train, validation, eval
std::shared_ptr<const ForestModel> train_predictor(const ExperimentConfig& cfg, const DriveTrace& train);
std::shared_ptr<const RatePredictor> make_predictor(const ExperimentConfig& cfg, std::shared_ptr<const ForestModel> forest);
BlackSpotBuild build_black_spots(const ExperimentConfig& cfg, const RatePredictor& predictor, const DriveTrace& validation);
/// Resolves S* and S_max (training label quantiles) into a copy of the bandit config.
BanditConfig resolve_targets(const ExperimentConfig& cfg, const DriveTrace& train);

/// Full preparation. A preloaded forest or map skips the corresponding stage.
Workbench prepare(const ExperimentConfig& cfg, std::shared_ptr<const ForestModel> forest = nullptr,
                  std::shared_ptr<const BlackSpotMap> map = nullptr);

/// Scheme names: periodic, cat, mlcat, rlcat, bscb, linucb (bscb with an empty map).
std::unique_ptr<Scheme> make_scheme(const std::string& name, const Workbench& wb);
std::vector<std::string> scheme_names();

/// One sweep grid point; metrics average the last kConvergenceWindow epochs.
struct SweepPoint {
    std::string value;
    double e_s = 0.0;
    double e_aoi = 0.0;
    double mean_rate = 0.0;
    double mean_aoi = 0.0;
    int convergence_epoch = 1;
};

/// Trains the configured scheme once per value of `key`. The forest and map are reused when
/// `key` cannot affect them (bandit.*, schemes.*, replay.*).
std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const std::string& key, const std::vector<std::string>& values,
                                  std::shared_ptr<const ForestModel> forest = nullptr,
                                  std::shared_ptr<const BlackSpotMap> map = nullptr);
/// Header `<key>,e_s,e_aoi,mean_rate,mean_aoi,convergence_epoch`.
std::string sweep_csv(const std::string& key, const std::vector<SweepPoint>& points);

/// Stable fingerprint of the configuration excluding the scheme choice and the seed.
std::string config_fingerprint(const ExperimentConfig& cfg);

}  // namespace bscb
