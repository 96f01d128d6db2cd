#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace bscb {

/// Transport block sizes per (tbs index, PRB count) with the CQI -> MCS -> TBS index chain.
/// The default table follows the shared-channel TBS determination of 3GPP TS 38.214
/// (MCS table 1, CQI table 1) for one layer, 15 kHz subcarrier spacing (one 1 ms slot per
/// subframe), 14 symbols with one DMRS symbol: 156 resource elements per PRB.
class ResourceLookupTable {
public:
    static constexpr int kMaxPrb = 110;

    ResourceLookupTable();  // standard table

    static ResourceLookupTable from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;

    /// -1 for CQI 0 (no transmission possible).
    int mcs_for_cqi(int cqi) const;
    int tbs_index_for_mcs(int mcs) const;
    /// Transport block bits for one subframe; 0 for cqi = 0. Throws for prbs outside [1, kMaxPrb].
    std::int64_t tbs_bits(int cqi, int prbs) const;
    int max_prb() const { return static_cast<int>(tbs_.empty() ? 0 : tbs_.front().size()); }

    /// Checks that every map is in range and the table is monotone in both arguments.
    void validate() const;

private:
    std::array<int, 16> cqi_to_mcs_{};
    std::vector<int> mcs_to_tbs_index_;
    std::vector<std::vector<std::int64_t>> tbs_;  // [tbs index][prb - 1]
};

/// Transport block size per the NR procedure (TS 38.214 5.1.3.2), single layer.
std::int64_t nr_transport_block_size(int re_per_prb, int prbs, int modulation_order, int code_rate_x1024);

std::int64_t cqi_to_tbs(int cqi, int prbs, const ResourceLookupTable& table);

/// A transmission as seen by the resource and energy accounting.
struct TransmissionRecord {
    double bytes = 0.0;
    int cqi = 0;
    double rsrp = 0.0;      // dBm
    double duration = 0.0;  // s
};

struct ResourceConfig {
    int bandwidth_prbs = 50;  // 10 MHz
};

/// PRB-subframes needed to carry one transmission: ceil(bits * N_bw / TBS(cqi, N_bw)).
/// CQI 0 is charged at CQI 1 (the most robust usable format).
std::int64_t resource_occupation(const TransmissionRecord& tx, const ResourceLookupTable& table, const ResourceConfig& cfg);
std::int64_t resource_occupation(std::span<const TransmissionRecord> log, const ResourceLookupTable& table,
                                 const ResourceConfig& cfg);

/// Piecewise-linear function over sorted anchors; constant beyond the end anchors.
struct PiecewiseLinear {
    std::vector<std::pair<double, double>> anchors;
    double operator()(double x) const;
};

struct PowerModel {
    /// RSRP (dBm) -> uplink transmit power (dBm), non-increasing.
    PiecewiseLinear rsrp_to_tx{{{-120.0, 23.0}, {-70.0, -10.0}}};
    /// Transmit power (dBm) -> device power (W) below and above the stage switch.
    PiecewiseLinear low_stage{{{-40.0, 0.5}, {10.0, 0.6}}};
    PiecewiseLinear high_stage{{{10.0, 1.0}, {23.0, 2.5}}};
    double stage_switch_dbm = 10.0;
    double min_tx_dbm = -40.0;
    double max_tx_dbm = 23.0;
    /// Baseline draw while not transmitting (W).
    double idle_power_w = 0.05;

    double device_power(double tx_dbm) const;
    void validate() const;

    static PowerModel from_json(const nlohmann::json& doc);
    nlohmann::json to_json() const;
};

double tx_power_from_rsrp(double rsrp, const PowerModel& model);
/// Joules for a transmission of the given duration at the given transmit power.
double energy(double duration, double tx_dbm, const PowerModel& model);
double energy(const TransmissionRecord& tx, const PowerModel& model);

struct EfficiencyIndicators {
    double e_s = 0.0;    // mean rate / S*
    double e_aoi = 0.0;  // 1 - mean AoI / dt_max
};

EfficiencyIndicators efficiency(double mean_rate, double mean_aoi, double s_target, double dt_max);

/// Linear-interpolated quantile (same convention as numpy's default).
double quantile(std::vector<double> values, double q);

struct Quartiles {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
    std::size_t count = 0;
};
Quartiles quartiles(std::span<const double> values);

/// Sorted (value, cumulative fraction) pairs.
std::vector<std::pair<double, double>> ecdf(std::vector<double> values);

/// Spearman rank correlation with average ranks for ties; NaN when either side is constant.
double spearman(std::span<const double> a, std::span<const double> b);

}  // namespace bscb
