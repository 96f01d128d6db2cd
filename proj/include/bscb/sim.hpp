#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscb/metrics.hpp"
#include "bscb/predictor.hpp"
#include "bscb/schemes.hpp"
#include "bscb/trace.hpp"

namespace bscb {

/// Stand-in for learned prediction-vs-ground-truth derivations: a multiplicative log-normal
/// residual around the trace label (or the prediction when unlabeled) and a payload
/// saturation factor payload/(payload + half_sat).
struct ChannelRealizationModel {
    double residual_sigma = 0.25;
    double payload_saturation = 1.5e6;  // bytes
    std::uint64_t seed = 1;
    double min_rate = 0.05;  // MBit/s floor so every transmission completes

    void validate() const;
};

struct Realization {
    double achieved_rate = 0.0;  // MBit/s
    double duration = 0.0;       // s
};

double payload_factor(double buffer_bytes, const ChannelRealizationModel& model);

/// draw_key selects the residual draw; equal keys reproduce equal outcomes.
Realization realize_transmission(const ContextSnapshot& s, double predicted, double buffer_bytes,
                                 const ChannelRealizationModel& model, std::uint64_t draw_key);

struct EpochResult {
    double mean_data_rate = 0.0;  // MBit/s, sum of bits over sum of transmission time
    double mean_aoi = 0.0;        // s, mean buffer age at transmission
    double max_aoi = 0.0;         // s, largest buffer age seen at any step
    std::int64_t total_prbs = 0;  // PRB-subframes
    double total_energy = 0.0;    // J
    int tx_count = 0;
    int forced_tx_count = 0;
    int deadline_violations = 0;  // steps with buffer age above dt_max
    int blackspot_tx_count = 0;   // non-forced transmissions inside a black spot
    double bytes_generated = 0.0;
    double bytes_sent = 0.0;
    double tx_time = 0.0;         // s
};

nlohmann::json epoch_result_to_json(const EpochResult& r);
EpochResult epoch_result_from_json(const nlohmann::json& doc);

enum class EventAction { Idle, Tx, Flush };

struct Event {
    int epoch = 0;
    double t = 0.0;
    EventAction action = EventAction::Idle;
    double predicted = 0.0;
    double achieved = 0.0;       // 0 unless transmitting
    double buffer_bytes = 0.0;   // before the action
    double aoi = 0.0;            // buffer age before the action
    bool in_blackspot = false;
    double reward = 0.0;         // NaN when the scheme did not learn at this step
    bool forced = false;
    int cqi = 0;
    double rsrp = 0.0;
    double duration = 0.0;
};

const char* to_string(EventAction a);
/// Header `epoch,t,action,predicted,achieved,buffer_bytes,aoi,in_blackspot,reward`; epochs are written 1-based.
std::string event_log_csv(const std::vector<Event>& events);
std::vector<TransmissionRecord> transmissions(const std::vector<Event>& events);

struct ReplayConfig {
    double source_rate = 5.0e4;  // bytes/s of sensor data
    double dt_max = 120.0;
    ChannelRealizationModel channel;
    ResourceConfig resources;
    PowerModel power;
    std::shared_ptr<const ResourceLookupTable> table = std::make_shared<ResourceLookupTable>();
    /// Used only for the black-spot flag in the log.
    std::shared_ptr<const BlackSpotMap> black_spots;

    void validate() const;
};

/// Replays one epoch of the trace through the scheme. Learning state inside the scheme carries
/// over between calls; `events` (optional) receives one row per snapshot with a buffered payload.
EpochResult replay_epoch(const DriveTrace& trace, Scheme& scheme, const RatePredictor& predictor, const ReplayConfig& cfg,
                         int epoch, std::vector<Event>* events = nullptr);

/// Recomputes aggregates from an event log (same formulas as replay_epoch).
EpochResult summarize_events(const std::vector<Event>& events, const ReplayConfig& cfg, double span, double bytes_generated);

struct TrainingReport {
    std::vector<EpochResult> epochs;
    int window = 20;
    int convergence_epoch = 1;  // 1-based

    std::vector<double> moving_average() const;
};

inline constexpr int kConvergenceWindow = 20;

/// Trailing moving average over at most `window` values.
std::vector<double> moving_average(const std::vector<double>& values, int window);
/// First 1-based index whose moving average reaches `fraction` of the final moving average.
int convergence_epoch(const std::vector<double>& values, int window, double fraction = 0.95);

enum class EventLogMode { None, Last, All };

TrainingReport run_training(const DriveTrace& trace, Scheme& scheme, const RatePredictor& predictor, const ReplayConfig& cfg,
                            int epochs, std::vector<Event>* events = nullptr, EventLogMode log_mode = EventLogMode::Last,
                            int first_epoch = 0);

nlohmann::json training_report_to_json(const TrainingReport& report);
/// Header `epoch,mean_data_rate,moving_average,mean_aoi,max_aoi,total_prbs,total_energy,tx_count`.
std::string epoch_series_csv(const TrainingReport& report);

/// Per-scheme distributions and deltas against the periodic baseline.
struct SchemeRuns {
    std::string scheme;
    std::string config_fingerprint;
    std::vector<EpochResult> runs;
};

struct SchemeSummary {
    std::string scheme;
    Quartiles data_rate, prbs, energy, aoi;
    double delta_data_rate = 0.0;  // relative to periodic mean, e.g. -0.5 for half
    double delta_prbs = 0.0;
    double delta_energy = 0.0;
    double delta_aoi = 0.0;
};

struct ComparativeReport {
    std::vector<SchemeSummary> schemes;
    std::string baseline;
    std::vector<std::string> warnings;
};

ComparativeReport comparative_report(const std::vector<SchemeRuns>& runs, const std::string& baseline = "periodic");
nlohmann::json comparative_report_to_json(const ComparativeReport& report);
/// Box-plot rows: scheme,metric,min,q1,median,q3,max,mean,count.
std::string comparative_report_csv(const ComparativeReport& report);

}  // namespace bscb
