#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bscb {

/// Planar position in meters.
struct Point2 {
    double x = 0.0;
    double y = 0.0;

    friend bool operator==(const Point2&, const Point2&) = default;
};

inline Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
inline Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
double distance(Point2 a, Point2 b);

/// Equirectangular projection about a fixed reference coordinate.
struct GeoProjection {
    double ref_lat = 0.0;  // degrees
    double ref_lon = 0.0;  // degrees

    Point2 to_plane(double lat, double lon) const;
    void to_geo(Point2 p, double& lat, double& lon) const;
};

/// One timestamped context record along a drive.
struct ContextSnapshot {
    double timestamp = 0.0;  // s
    double lat = 0.0;
    double lon = 0.0;
    Point2 position;         // m, in the owning trace's projection
    double rsrp = 0.0;       // dBm
    double rsrq = 0.0;       // dB
    double sinr = 0.0;       // dB
    int cqi = 0;             // 0..15
    int ta = 0;              // >= 0
    double carrier_freq = 0.0;  // MHz
    double velocity = 0.0;   // m/s
    std::string cell_id;
    double payload_size = 0.0;  // bytes
    /// Ground-truth data rate (MBit/s) when a transmission was measured here.
    std::optional<double> measured_rate;
};

struct DriveTrace {
    std::vector<ContextSnapshot> snapshots;
    std::string mno_id;
    GeoProjection projection;

    /// Throws ConfigError when a type invariant is violated.
    void validate() const;
    double span() const;  // last - first timestamp
    double mean_interval() const;
};

/// Logical field -> CSV column name.
struct TraceSchema {
    std::map<std::string, std::string> columns;

    static TraceSchema standard();
    const std::string& column(const std::string& field) const;
};

struct ParseReport {
    std::size_t rows = 0;
    std::size_t defaulted_ta = 0;
    std::size_t defaulted_freq = 0;
    std::size_t labeled_rows = 0;
};

struct ParseOptions {
    TraceSchema schema = TraceSchema::standard();
    std::string mno_id = "A";
    double default_carrier_freq = 1800.0;
    /// Projection origin; the centroid of the parsed coordinates when empty.
    std::optional<GeoProjection> projection;
};

/// Reads a trace CSV (header `t,lat,lon,rsrp,rsrq,sinr,cqi,ta,freq,speed,cell,payload,datarate`).
/// Invariant violations raise ParseError naming the first offending row (1-based data row) and
/// field; the message lists every violating row.
DriveTrace parse_trace(const std::filesystem::path& path, const ParseOptions& options = {},
                       ParseReport* report = nullptr);
DriveTrace parse_trace_string(const std::string& csv, const ParseOptions& options = {},
                              ParseReport* report = nullptr);

std::string serialize_trace(const DriveTrace& trace);
void write_trace(const DriveTrace& trace, const std::filesystem::path& path);

struct CongestionSegment {
    double start_fraction = 0.0;  // fraction of track length where the segment begins
    double multiplier = 1.0;
};

enum class PayloadMode { Random, Fixed };

/// Parameters of the desk-scale drive scenario generator.
struct SyntheticScenarioConfig {
    double track_length = 5000.0;  // m
    double mean_speed = 15.0;      // m/s
    int hotspot_count = 5;
    std::uint64_t noise_seed = 1;
    /// Geometry (track shape, hotspot and cell positions) is drawn from this seed, so traces
    /// with different noise seeds share one map.
    std::uint64_t layout_seed = 7;
    std::vector<CongestionSegment> congestion_profile = {{0.0, 1.0}, {0.35, 0.8}, {0.6, 1.0}, {0.85, 0.9}};

    int laps = 1;
    double snapshot_interval = 1.0;  // s
    double start_time = 8.0 * 3600.0;

    double s_cap = 40.0;                // MBit/s
    double payload_half_sat = 1.5e6;    // bytes
    double label_noise_sigma = 1.0;     // MBit/s
    double base_sinr = 2.0;             // dB
    double hotspot_gain = 18.0;         // dB
    double hotspot_width = 120.0;       // m (arc length)
    double sinr_noise_sigma = 2.0;      // dB
    double cell_spacing = 1500.0;       // m

    int planted_error_regions = 0;
    double planted_error_radius = 50.0;  // m
    double planted_error_sigma = 8.0;    // MBit/s, additive label error inside planted regions

    PayloadMode payload_mode = PayloadMode::Random;
    double payload_min = 2.0e4;
    double payload_max = 8.0e6;
    double fixed_payload = 5.0e7;

    std::string mno_id = "A";
    GeoProjection projection{51.4934, 7.4137};

    void validate() const;
};

/// Deterministic ground-truth rate: s_cap * sigmoid(sinr/10) * payload/(payload+half_sat) * congestion.
double ground_truth_rate(const SyntheticScenarioConfig& cfg, double sinr, double payload, double congestion);
double congestion_at(const SyntheticScenarioConfig& cfg, double arc_fraction);

/// Centers of the planted high-error regions (empty unless planted_error_regions > 0).
std::vector<Point2> planted_error_centers(const SyntheticScenarioConfig& cfg);

DriveTrace generate_synthetic_trace(const SyntheticScenarioConfig& cfg);

}  // namespace bscb
