#include "bscb/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "bscb/error.hpp"
#include "text_util.hpp"

namespace bscb {

namespace {

constexpr double kEarthRadius = 6371000.0;
constexpr double kDegToRad = std::numbers::pi / 180.0;

const std::vector<std::string> kFieldOrder = {"t",    "lat",   "lon",  "rsrp",    "rsrq",
                                              "sinr", "cqi",   "ta",   "freq",    "speed",
                                              "cell", "payload", "datarate"};

}  // namespace

double distance(Point2 a, Point2 b) { return std::hypot(a.x - b.x, a.y - b.y); }

Point2 GeoProjection::to_plane(double lat, double lon) const {
    const double x = (lon - ref_lon) * kDegToRad * std::cos(ref_lat * kDegToRad) * kEarthRadius;
    const double y = (lat - ref_lat) * kDegToRad * kEarthRadius;
    return {x, y};
}

void GeoProjection::to_geo(Point2 p, double& lat, double& lon) const {
    lat = ref_lat + p.y / kEarthRadius / kDegToRad;
    lon = ref_lon + p.x / (kEarthRadius * std::cos(ref_lat * kDegToRad)) / kDegToRad;
}

void DriveTrace::validate() const {
    if (snapshots.empty()) throw ConfigError("trace: no snapshots");
    for (std::size_t i = 0; i < snapshots.size(); ++i) {
        const auto& s = snapshots[i];
        if (s.cqi < 0 || s.cqi > 15) throw ConfigError("trace: cqi out of range at index " + std::to_string(i));
        if (s.velocity < 0.0) throw ConfigError("trace: negative velocity at index " + std::to_string(i));
        if (s.payload_size < 0.0) throw ConfigError("trace: negative payload at index " + std::to_string(i));
        if (s.ta < 0) throw ConfigError("trace: negative ta at index " + std::to_string(i));
        if (i > 0 && !(s.timestamp > snapshots[i - 1].timestamp))
            throw ConfigError("trace: timestamps not strictly increasing at index " + std::to_string(i));
    }
}

double DriveTrace::span() const {
    if (snapshots.empty()) return 0.0;
    return snapshots.back().timestamp - snapshots.front().timestamp;
}

double DriveTrace::mean_interval() const {
    if (snapshots.size() < 2) return 0.0;
    return span() / static_cast<double>(snapshots.size() - 1);
}

TraceSchema TraceSchema::standard() {
    TraceSchema schema;
    for (const auto& f : kFieldOrder) schema.columns[f] = f;
    return schema;
}

const std::string& TraceSchema::column(const std::string& field) const {
    auto it = columns.find(field);
    if (it == columns.end()) throw ConfigError("schema: no column mapped for field '" + field + "'");
    return it->second;
}

DriveTrace parse_trace(const std::filesystem::path& path, const ParseOptions& options, ParseReport* report) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open trace file: " + path.string(), 0, "");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_trace_string(buf.str(), options, report);
}

DriveTrace parse_trace_string(const std::string& csv, const ParseOptions& options, ParseReport* report) {
    auto lines = detail::split_lines(csv);
    if (lines.empty()) throw ParseError("trace: missing header row", 0, "");

    const auto header = detail::split(lines.front(), ',');
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index[detail::trim(header[i])] = i;

    auto locate = [&](const std::string& field, bool required) -> std::optional<std::size_t> {
        const auto& col = options.schema.column(field);
        auto it = index.find(col);
        if (it == index.end()) {
            if (required) throw ParseError("trace: missing column '" + col + "'", 0, field);
            return std::nullopt;
        }
        return it->second;
    };

    const auto c_t = *locate("t", true);
    const auto c_lat = *locate("lat", true);
    const auto c_lon = *locate("lon", true);
    const auto c_rsrp = *locate("rsrp", true);
    const auto c_rsrq = *locate("rsrq", true);
    const auto c_sinr = *locate("sinr", true);
    const auto c_cqi = *locate("cqi", true);
    const auto c_ta = locate("ta", false);
    const auto c_freq = locate("freq", false);
    const auto c_speed = *locate("speed", true);
    const auto c_cell = *locate("cell", true);
    const auto c_payload = *locate("payload", true);
    const auto c_rate = locate("datarate", false);

    ParseReport rep;
    DriveTrace trace;
    trace.mno_id = options.mno_id;

    std::vector<std::string> problems;
    std::size_t first_row = 0;
    std::string first_field;
    auto flag = [&](std::size_t row, const std::string& field, const std::string& msg) {
        if (problems.empty()) {
            first_row = row;
            first_field = field;
        }
        problems.push_back("row " + std::to_string(row) + " field '" + field + "': " + msg);
    };

    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (detail::trim(lines[li]).empty()) continue;
        const std::size_t row = ++rep.rows;
        const auto cells = detail::split(lines[li], ',');
        auto cell = [&](std::size_t c) -> std::string {
            return c < cells.size() ? detail::trim(cells[c]) : std::string{};
        };
        auto number = [&](std::size_t c, const std::string& field, double& out) -> bool {
            const auto text = cell(c);
            if (!detail::parse_double(text, out)) {
                flag(row, field, "not a number: '" + text + "'");
                return false;
            }
            return true;
        };

        ContextSnapshot s;
        bool ok = number(c_t, "t", s.timestamp);
        ok &= number(c_lat, "lat", s.lat);
        ok &= number(c_lon, "lon", s.lon);
        ok &= number(c_rsrp, "rsrp", s.rsrp);
        ok &= number(c_rsrq, "rsrq", s.rsrq);
        ok &= number(c_sinr, "sinr", s.sinr);
        double cqi = 0.0;
        if (number(c_cqi, "cqi", cqi)) {
            if (cqi < 0.0 || cqi > 15.0 || cqi != std::floor(cqi)) {
                flag(row, "cqi", "out of range [0, 15]: " + cell(c_cqi));
                ok = false;
            }
            s.cqi = static_cast<int>(cqi);
        } else {
            ok = false;
        }
        if (c_ta && !cell(*c_ta).empty()) {
            double ta = 0.0;
            if (number(*c_ta, "ta", ta)) {
                if (ta < 0.0 || ta != std::floor(ta)) {
                    flag(row, "ta", "must be a non-negative integer");
                    ok = false;
                }
                s.ta = static_cast<int>(ta);
            } else {
                ok = false;
            }
        } else {
            s.ta = 0;
            ++rep.defaulted_ta;
        }
        if (c_freq && !cell(*c_freq).empty()) {
            ok &= number(*c_freq, "freq", s.carrier_freq);
        } else {
            s.carrier_freq = options.default_carrier_freq;
            ++rep.defaulted_freq;
        }
        if (number(c_speed, "speed", s.velocity) && s.velocity < 0.0) {
            flag(row, "speed", "negative velocity");
            ok = false;
        }
        s.cell_id = cell(c_cell);
        if (number(c_payload, "payload", s.payload_size) && s.payload_size < 0.0) {
            flag(row, "payload", "negative payload");
            ok = false;
        }
        if (c_rate && !cell(*c_rate).empty()) {
            double rate = 0.0;
            if (number(*c_rate, "datarate", rate)) {
                if (rate < 0.0) {
                    flag(row, "datarate", "negative data rate");
                    ok = false;
                }
                s.measured_rate = rate;
                ++rep.labeled_rows;
            } else {
                ok = false;
            }
        }
        if (ok && !trace.snapshots.empty() && !(s.timestamp > trace.snapshots.back().timestamp)) {
            flag(row, "t", "timestamps not strictly increasing");
            ok = false;
        }
        if (ok) trace.snapshots.push_back(std::move(s));
    }

    if (!problems.empty()) {
        std::string msg = "trace: " + std::to_string(problems.size()) + " invalid row(s): ";
        for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
        throw ParseError(msg, first_row, first_field);
    }
    if (trace.snapshots.empty()) throw ParseError("trace: no data rows", 0, "");

    if (options.projection) {
        trace.projection = *options.projection;
    } else {
        double lat = 0.0, lon = 0.0;
        for (const auto& s : trace.snapshots) {
            lat += s.lat;
            lon += s.lon;
        }
        const auto n = static_cast<double>(trace.snapshots.size());
        trace.projection = {lat / n, lon / n};
    }
    for (auto& s : trace.snapshots) s.position = trace.projection.to_plane(s.lat, s.lon);

    if (report) *report = rep;
    return trace;
}

std::string serialize_trace(const DriveTrace& trace) {
    std::string out;
    for (std::size_t i = 0; i < kFieldOrder.size(); ++i) out += (i ? "," : "") + kFieldOrder[i];
    out += '\n';
    for (const auto& s : trace.snapshots) {
        using detail::format_double;
        out += format_double(s.timestamp) + ',' + format_double(s.lat) + ',' + format_double(s.lon) + ',' +
               format_double(s.rsrp) + ',' + format_double(s.rsrq) + ',' + format_double(s.sinr) + ',' +
               std::to_string(s.cqi) + ',' + std::to_string(s.ta) + ',' + format_double(s.carrier_freq) + ',' +
               format_double(s.velocity) + ',' + s.cell_id + ',' + format_double(s.payload_size) + ',' +
               (s.measured_rate ? format_double(*s.measured_rate) : std::string{}) + '\n';
    }
    return out;
}

void write_trace(const DriveTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write trace file: " + path.string());
    out << serialize_trace(trace);
}

// ---------------------------------------------------------------------------
// Synthetic scenario generator

void SyntheticScenarioConfig::validate() const {
    if (!(track_length > 0.0)) throw ConfigError("scenario: track_length must be > 0");
    if (!(mean_speed > 0.0)) throw ConfigError("scenario: mean_speed must be > 0");
    if (hotspot_count < 0) throw ConfigError("scenario: hotspot_count must be >= 0");
    if (laps < 1) throw ConfigError("scenario: laps must be >= 1");
    if (!(snapshot_interval > 0.0)) throw ConfigError("scenario: snapshot_interval must be > 0");
    if (!(s_cap > 0.0)) throw ConfigError("scenario: s_cap must be > 0");
    if (!(payload_half_sat > 0.0)) throw ConfigError("scenario: payload_half_sat must be > 0");
    if (label_noise_sigma < 0.0 || sinr_noise_sigma < 0.0) throw ConfigError("scenario: noise sigma must be >= 0");
    if (!(hotspot_width > 0.0) || !(cell_spacing > 0.0)) throw ConfigError("scenario: widths must be > 0");
    if (planted_error_regions < 0 || !(planted_error_radius > 0.0) || planted_error_sigma < 0.0)
        throw ConfigError("scenario: invalid planted error regions");
    if (!(payload_min > 0.0) || payload_max < payload_min || fixed_payload < 0.0)
        throw ConfigError("scenario: invalid payload range");
    for (std::size_t i = 0; i < congestion_profile.size(); ++i) {
        const auto& seg = congestion_profile[i];
        if (seg.multiplier < 0.0) throw ConfigError("scenario: congestion multiplier must be >= 0");
        if (i > 0 && seg.start_fraction <= congestion_profile[i - 1].start_fraction)
            throw ConfigError("scenario: congestion segments must be sorted by start_fraction");
    }
}

double ground_truth_rate(const SyntheticScenarioConfig& cfg, double sinr, double payload, double congestion) {
    const double sig = 1.0 / (1.0 + std::exp(-sinr / 10.0));
    const double sat = payload / (payload + cfg.payload_half_sat);
    return cfg.s_cap * sig * sat * congestion;
}

double congestion_at(const SyntheticScenarioConfig& cfg, double arc_fraction) {
    double m = 1.0;
    for (const auto& seg : cfg.congestion_profile) {
        if (arc_fraction >= seg.start_fraction) m = seg.multiplier;
    }
    return m;
}

namespace {

struct TrackGeometry {
    std::vector<Point2> points;   // polyline vertices
    std::vector<double> arc;      // cumulative arc length per vertex
    std::vector<double> hotspots; // arc-length centers
    std::vector<double> field_phase;
    std::vector<double> field_wavelength;
    std::vector<Point2> cell_sites;
    std::vector<double> planted_arcs;

    Point2 at(double s) const {
        s = std::clamp(s, 0.0, arc.back());
        auto it = std::upper_bound(arc.begin(), arc.end(), s);
        std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - arc.begin()), arc.size() - 1);
        std::size_t lo = hi == 0 ? 0 : hi - 1;
        const double seg = arc[hi] - arc[lo];
        const double w = seg > 0.0 ? (s - arc[lo]) / seg : 0.0;
        return {points[lo].x + w * (points[hi].x - points[lo].x), points[lo].y + w * (points[hi].y - points[lo].y)};
    }
};

TrackGeometry build_geometry(const SyntheticScenarioConfig& cfg) {
    std::mt19937_64 rng(cfg.layout_seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    TrackGeometry g;
    constexpr double kStep = 5.0;
    const auto steps = static_cast<std::size_t>(std::ceil(cfg.track_length / kStep));
    double heading = unit(rng) * 2.0 * std::numbers::pi;
    double turn = 0.0;
    Point2 p{0.0, 0.0};
    g.points.push_back(p);
    g.arc.push_back(0.0);
    for (std::size_t i = 1; i <= steps; ++i) {
        const double len = std::min(kStep, cfg.track_length - g.arc.back());
        turn = 0.97 * turn + 0.004 * gauss(rng);
        heading += turn;
        p = {p.x + len * std::cos(heading), p.y + len * std::sin(heading)};
        g.points.push_back(p);
        g.arc.push_back(g.arc.back() + len);
    }

    for (int h = 0; h < cfg.hotspot_count; ++h) {
        const double slot = cfg.track_length / cfg.hotspot_count;
        g.hotspots.push_back((h + 0.5 + 0.6 * (unit(rng) - 0.5)) * slot);
    }
    for (int k = 0; k < 3; ++k) {
        g.field_phase.push_back(unit(rng) * 2.0 * std::numbers::pi);
        g.field_wavelength.push_back(300.0 + 1200.0 * unit(rng));
    }
    const int cells = std::max(1, static_cast<int>(std::ceil(cfg.track_length / cfg.cell_spacing)));
    for (int c = 0; c < cells; ++c) {
        const double s = (c + 0.5) * cfg.track_length / cells;
        const Point2 base = g.at(s);
        const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
        g.cell_sites.push_back({base.x + side * (200.0 + 300.0 * unit(rng)), base.y + side * (200.0 + 300.0 * unit(rng))});
    }
    // Planted regions use their own stream so adding them leaves the rest of the layout intact.
    std::mt19937_64 prng(cfg.layout_seed ^ 0x9e3779b97f4a7c15ULL);
    for (int r = 0; r < cfg.planted_error_regions; ++r) {
        const double slot = cfg.track_length / cfg.planted_error_regions;
        g.planted_arcs.push_back((r + 0.5 + 0.5 * (std::uniform_real_distribution<double>(0.0, 1.0)(prng) - 0.5)) * slot);
    }
    return g;
}

double static_sinr(const SyntheticScenarioConfig& cfg, const TrackGeometry& g, double s) {
    double v = cfg.base_sinr;
    for (std::size_t k = 0; k < g.field_phase.size(); ++k)
        v += (4.0 / std::sqrt(3.0)) * std::sin(2.0 * std::numbers::pi * s / g.field_wavelength[k] + g.field_phase[k]);
    for (double h : g.hotspots) {
        const double d = (s - h) / cfg.hotspot_width;
        v += cfg.hotspot_gain * std::exp(-d * d);
    }
    return v;
}

}  // namespace

std::vector<Point2> planted_error_centers(const SyntheticScenarioConfig& cfg) {
    cfg.validate();
    const auto g = build_geometry(cfg);
    std::vector<Point2> out;
    for (double s : g.planted_arcs) out.push_back(g.at(s));
    return out;
}

DriveTrace generate_synthetic_trace(const SyntheticScenarioConfig& cfg) {
    cfg.validate();
    const auto g = build_geometry(cfg);
    std::vector<Point2> planted;
    for (double s : g.planted_arcs) planted.push_back(g.at(s));

    std::mt19937_64 rng(cfg.noise_seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    DriveTrace trace;
    trace.mno_id = cfg.mno_id;
    trace.projection = cfg.projection;

    double t = cfg.start_time;
    const double rho = 0.8;
    for (int lap = 0; lap < cfg.laps; ++lap) {
        double s = 0.0;
        double sinr_noise = 0.0;
        double speed_noise = 0.0;
        while (s <= cfg.track_length) {
            ContextSnapshot snap;
            snap.timestamp = t;
            snap.position = g.at(s);
            cfg.projection.to_geo(snap.position, snap.lat, snap.lon);

            sinr_noise = rho * sinr_noise + std::sqrt(1.0 - rho * rho) * cfg.sinr_noise_sigma * gauss(rng);
            const double sinr = static_sinr(cfg, g, s) + sinr_noise;
            snap.sinr = sinr;
            snap.rsrp = std::clamp(-100.0 + 1.2 * (sinr - cfg.base_sinr) + 1.5 * gauss(rng), -140.0, -44.0);
            snap.rsrq = std::clamp(-12.0 + 0.3 * sinr + 0.5 * gauss(rng), -20.0, -3.0);
            snap.cqi = std::clamp(static_cast<int>(std::lround(1.0 + (sinr + 6.0) / 2.0)), 0, 15);

            std::size_t nearest = 0;
            for (std::size_t c = 1; c < g.cell_sites.size(); ++c)
                if (distance(snap.position, g.cell_sites[c]) < distance(snap.position, g.cell_sites[nearest])) nearest = c;
            snap.cell_id = "cell-" + std::to_string(nearest);
            snap.ta = static_cast<int>(std::floor(distance(snap.position, g.cell_sites[nearest]) / 78.12));
            snap.carrier_freq = nearest % 2 == 0 ? 1800.0 : 800.0;

            speed_noise = 0.9 * speed_noise + 0.3 * gauss(rng);
            const double v = std::max(1.0, cfg.mean_speed * (1.0 + 0.15 * std::sin(2.0 * std::numbers::pi * s / 2000.0)) + speed_noise);
            snap.velocity = v;

            if (cfg.payload_mode == PayloadMode::Random) {
                snap.payload_size = std::round(cfg.payload_min * std::pow(cfg.payload_max / cfg.payload_min, unit(rng)));
            } else {
                snap.payload_size = cfg.fixed_payload;
            }

            const double cong = congestion_at(cfg, s / cfg.track_length);
            double label = ground_truth_rate(cfg, sinr, snap.payload_size, cong) + cfg.label_noise_sigma * gauss(rng);
            bool in_planted = false;
            for (const auto& c : planted) in_planted = in_planted || distance(snap.position, c) <= cfg.planted_error_radius;
            // Both draws happen on every snapshot so planting regions leaves the other labels unchanged.
            const double distortion = 0.05 + 1.95 * unit(rng);
            const double planted_noise = cfg.planted_error_sigma * gauss(rng);
            if (in_planted) label = label * distortion + planted_noise;
            snap.measured_rate = std::max(0.0, label);

            trace.snapshots.push_back(std::move(snap));
            t += cfg.snapshot_interval;
            s += v * cfg.snapshot_interval;
        }
    }
    return trace;
}

}  // namespace bscb
