#include "bscb/blackspot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "bscb/error.hpp"
#include "bscb/metrics.hpp"
#include "text_util.hpp"

namespace bscb {

namespace {

double sq_dist(Point2 a, Point2 b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
}

double normalize_rotation(double r) {
    while (r >= std::numbers::pi / 2) r -= std::numbers::pi;
    while (r < -std::numbers::pi / 2) r += std::numbers::pi;
    return r;
}

std::vector<Point2> kmeanspp_seed(std::span<const Point2> points, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = points.size();
    std::vector<Point2> centers;
    centers.reserve(k);
    centers.push_back(points[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points[i], centers[0]);
    while (centers.size() < k) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t chosen = 0;
        if (total <= 0.0) {
            // Fewer distinct points than clusters; duplicates become (later empty) centers.
            chosen = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
        } else {
            double target = std::uniform_real_distribution<double>(0.0, total)(rng);
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                target -= d2[i];
                if (target < 0.0 && d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        }
        centers.push_back(points[chosen]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], centers.back()));
    }
    return centers;
}

double inertia_of(std::span<const Point2> points, const std::vector<Point2>& centers,
                  const std::vector<std::size_t>& assignment) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += sq_dist(points[i], centers[assignment[i]]);
    return s;
}

}  // namespace

KMeansResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed, int max_iterations) {
    if (k == 0) throw ConfigError("kmeans: k must be >= 1");
    if (k > points.size()) throw ConfigError("kmeans: k exceeds the number of points");
    const std::size_t n = points.size();
    std::mt19937_64 rng(seed);
    auto centers = kmeanspp_seed(points, k, rng);

    KMeansResult result;
    std::vector<std::size_t> assignment(n, k);
    std::vector<std::size_t> counts(k);

    for (int iter = 0; iter < max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t best = 0;
            double best_d = sq_dist(points[i], centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sq_dist(points[i], centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assignment[i] != best) {
                assignment[i] = best;
                changed = true;
            }
        }

        // Re-seed empty clusters from the currently worst-served point.
        std::fill(counts.begin(), counts.end(), 0);
        for (auto a : assignment) ++counts[a];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            std::size_t far = n;
            double far_d = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assignment[i]] < 2) continue;
                const double d = sq_dist(points[i], centers[assignment[i]]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            if (far == n) continue;  // every remaining point sits on its centroid
            --counts[assignment[far]];
            assignment[far] = c;
            counts[c] = 1;
            centers[c] = points[far];
            changed = true;
        }
        result.inertia_trace.push_back(inertia_of(points, centers, assignment));

        if (!changed && iter > 0) {
            result.converged = true;
            result.iterations = iter;
            break;
        }

        std::vector<Point2> sums(k, Point2{0.0, 0.0});
        for (std::size_t i = 0; i < n; ++i) {
            sums[assignment[i]].x += points[i].x;
            sums[assignment[i]].y += points[i].y;
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) continue;
            centers[c] = {sums[c].x / static_cast<double>(counts[c]), sums[c].y / static_cast<double>(counts[c])};
        }
        result.inertia_trace.push_back(inertia_of(points, centers, assignment));
        result.iterations = iter + 1;
    }

    std::vector<std::size_t> remap(k, k);
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        remap[c] = result.clusters.size();
        result.clusters.push_back({centers[c], {}, 0.0});
    }
    result.assignment.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        result.assignment[i] = remap[assignment[i]];
        result.clusters[result.assignment[i]].members.push_back(i);
    }
    return result;
}

std::vector<Cluster> kmeans_cluster(std::span<const Point2> points, std::size_t k, std::uint64_t seed) {
    return kmeans(points, k, seed).clusters;
}

void assign_cluster_rmse(std::vector<Cluster>& clusters, std::span<const PredictionRecord> records) {
    for (auto& c : clusters) {
        std::vector<PredictionRecord> members;
        members.reserve(c.members.size());
        for (auto i : c.members) {
            if (i >= records.size()) throw ConfigError("cluster member index out of range");
            members.push_back(records[i]);
        }
        c.rmse = members.empty() ? 0.0 : prediction_rmse(members);
    }
}

std::vector<Cluster> classify_black_spots(std::span<const Cluster> clusters, double rmse_max) {
    std::vector<Cluster> out;
    for (const auto& c : clusters)
        if (c.rmse > rmse_max) out.push_back(c);
    return out;
}

BlackSpotEllipse fit_ellipse(const Cluster& cluster, std::span<const Point2> positions, const EllipseFitOptions& options) {
    if (cluster.members.empty()) throw ConfigError("fit_ellipse: cluster has no members");
    if (!(options.min_semi_axis > 0.0)) throw ConfigError("fit_ellipse: min_semi_axis must be > 0");

    Point2 center{0.0, 0.0};
    for (auto i : cluster.members) {
        center.x += positions[i].x;
        center.y += positions[i].y;
    }
    const auto n = static_cast<double>(cluster.members.size());
    center = {center.x / n, center.y / n};

    double cxx = 0.0, cyy = 0.0, cxy = 0.0;
    for (auto i : cluster.members) {
        const auto v = positions[i] - center;
        cxx += v.x * v.x;
        cyy += v.y * v.y;
        cxy += v.x * v.y;
    }
    cxx /= n;
    cyy /= n;
    cxy /= n;

    BlackSpotEllipse e;
    e.center = center;
    e.source_rmse = cluster.rmse;
    const double floor = options.min_semi_axis;
    if (cxx + cyy <= 0.0) {
        e.semi_major = e.semi_minor = floor;
        e.rotation = 0.0;
        return e;
    }

    double angle = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    const double c = std::cos(angle), s = std::sin(angle);
    double a = 0.0, b = 0.0;
    if (options.extent == EllipseExtent::MaxProjection) {
        for (auto i : cluster.members) {
            const auto v = positions[i] - center;
            a = std::max(a, std::abs(c * v.x + s * v.y));
            b = std::max(b, std::abs(s * v.x - c * v.y));
        }
        a = std::max(a, floor);
        b = std::max(b, floor);
        double worst = 0.0;
        for (auto i : cluster.members) {
            const auto v = positions[i] - center;
            const double u = (c * v.x + s * v.y) / a, w = (s * v.x - c * v.y) / b;
            worst = std::max(worst, u * u + w * w);
        }
        if (worst > 1.0) {
            const double scale = std::sqrt(worst) * (1.0 + 1e-12);
            a *= scale;
            b *= scale;
        }
    } else {
        const double mid = 0.5 * (cxx + cyy);
        const double rad = std::sqrt(0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy);
        a = std::max(2.0 * std::sqrt(std::max(0.0, mid + rad)), floor);
        b = std::max(2.0 * std::sqrt(std::max(0.0, mid - rad)), floor);
    }
    if (b > a) {
        std::swap(a, b);
        angle += std::numbers::pi / 2;
    }
    e.semi_major = a;
    e.semi_minor = b;
    e.rotation = normalize_rotation(angle);
    return e;
}

bool point_in_ellipse(Point2 p, const BlackSpotEllipse& e) {
    const auto v = p - e.center;
    const double c = std::cos(e.rotation), s = std::sin(e.rotation);
    const double u = c * v.x + s * v.y;
    const double w = s * v.x - c * v.y;
    return u * u / (e.semi_major * e.semi_major) + w * w / (e.semi_minor * e.semi_minor) <= 1.0;
}

BoundingBox bounding_box(const BlackSpotEllipse& e) {
    const double c = std::cos(e.rotation), s = std::sin(e.rotation);
    const double a = e.semi_major, b = e.semi_minor;
    const double hx = std::sqrt(a * a * c * c + b * b * s * s) * (1.0 + 1e-9) + 1e-9;
    const double hy = std::sqrt(a * a * s * s + b * b * c * c) * (1.0 + 1e-9) + 1e-9;
    return {e.center.x - hx, e.center.y - hy, e.center.x + hx, e.center.y + hy};
}

BlackSpotMap::BlackSpotMap(std::vector<BlackSpotEllipse> ellipses, std::string mno_id, double threshold_used)
    : ellipses_(std::move(ellipses)), mno_id_(std::move(mno_id)), threshold_(threshold_used) {
    for (const auto& e : ellipses_) {
        if (!(e.semi_minor > 0.0) || e.semi_major < e.semi_minor)
            throw ConfigError("black-spot map: ellipse requires a >= b > 0");
        if (e.rotation < -std::numbers::pi / 2 || e.rotation >= std::numbers::pi / 2)
            throw ConfigError("black-spot map: rotation outside [-pi/2, pi/2)");
        if (!(e.source_rmse > threshold_))
            throw ConfigError("black-spot map: ellipse rmse does not exceed the threshold");
        boxes_.push_back(bounding_box(e));
    }
}

bool BlackSpotMap::contains(Point2 p) const {
    for (std::size_t i = 0; i < ellipses_.size(); ++i) {
        if (boxes_[i].contains(p) && point_in_ellipse(p, ellipses_[i])) return true;
    }
    return false;
}

bool BlackSpotMap::contains_exhaustive(Point2 p) const {
    return std::any_of(ellipses_.begin(), ellipses_.end(), [&](const auto& e) { return point_in_ellipse(p, e); });
}

BlackSpotBuild build_black_spot_map(std::span<const PredictionRecord> records, const BlackSpotConfig& cfg,
                                    const std::string& mno_id, double path_length_m) {
    if (records.empty()) throw ConfigError("black spots: no prediction records");
    if (cfg.rmse_max < 0.0) throw ConfigError("black spots: rmse_max must be >= 0");
    std::vector<Point2> positions;
    positions.reserve(records.size());
    for (const auto& r : records) positions.push_back(r.position);

    std::size_t k = cfg.n_clusters;
    if (k == 0) {
        if (!(path_length_m > 0.0) || !(cfg.clusters_per_km > 0.0))
            throw ConfigError("black spots: cluster count needs n_clusters or a path length");
        k = static_cast<std::size_t>(std::max(1.0, std::round(cfg.clusters_per_km * path_length_m / 1000.0)));
    }
    k = std::min(k, positions.size());

    BlackSpotBuild out;
    out.n_clusters = k;
    out.clusters = kmeans_cluster(positions, k, cfg.seed);
    assign_cluster_rmse(out.clusters, records);

    std::vector<BlackSpotEllipse> ellipses;
    for (const auto& c : classify_black_spots(out.clusters, cfg.rmse_max)) ellipses.push_back(fit_ellipse(c, positions, cfg.ellipse));
    out.map = BlackSpotMap(std::move(ellipses), mno_id, cfg.rmse_max);
    return out;
}

std::vector<BlackSpotRun> black_spot_statistics(const DriveTrace& trace, const BlackSpotMap& map) {
    std::vector<BlackSpotRun> runs;
    if (map.empty()) return runs;
    const auto& snaps = trace.snapshots;
    bool open = false;
    BlackSpotRun run;
    for (std::size_t i = 0; i < snaps.size(); ++i) {
        const bool inside = map.contains(snaps[i].position);
        if (inside && !open) {
            open = true;
            run = {i, i, 0.0, 0.0};
        } else if (inside) {
            run.distance += distance(snaps[i - 1].position, snaps[i].position);
            run.duration = snaps[i].timestamp - snaps[run.first].timestamp;
            run.last = i;
        } else if (open) {
            runs.push_back(run);
            open = false;
        }
    }
    if (open) runs.push_back(run);
    return runs;
}

std::string black_spot_ecdf_csv(const std::vector<BlackSpotRun>& runs) {
    using detail::format_double;
    std::vector<double> dist, dur;
    for (const auto& r : runs) {
        dist.push_back(r.distance);
        dur.push_back(r.duration);
    }
    std::ostringstream out;
    out << "quantity,value,probability\n";
    for (const auto& [v, p] : ecdf(dist)) out << "distance," << format_double(v) << ',' << format_double(p) << '\n';
    for (const auto& [v, p] : ecdf(dur)) out << "duration," << format_double(v) << ',' << format_double(p) << '\n';
    return out.str();
}

nlohmann::json black_spot_map_to_json(const BlackSpotMap& map) {
    nlohmann::json ellipses = nlohmann::json::array();
    for (const auto& e : map.ellipses())
        ellipses.push_back({{"cx", e.center.x}, {"cy", e.center.y}, {"a", e.semi_major}, {"b", e.semi_minor},
                            {"rot", e.rotation}, {"rmse", e.source_rmse}});
    return {{"mno", map.mno_id()}, {"rmse_max", map.threshold_used()}, {"ellipses", ellipses}};
}

BlackSpotMap black_spot_map_from_json(const nlohmann::json& doc) {
    std::vector<BlackSpotEllipse> ellipses;
    for (const auto& e : doc.at("ellipses")) {
        ellipses.push_back({{e.at("cx").get<double>(), e.at("cy").get<double>()},
                            e.at("a").get<double>(),
                            e.at("b").get<double>(),
                            e.at("rot").get<double>(),
                            e.at("rmse").get<double>()});
    }
    return BlackSpotMap(std::move(ellipses), doc.at("mno").get<std::string>(), doc.at("rmse_max").get<double>());
}

void save_black_spot_map(const BlackSpotMap& map, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write black-spot map: " + path.string());
    out << black_spot_map_to_json(map).dump(2) << '\n';
}

BlackSpotMap load_black_spot_map(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open black-spot map: " + path.string());
    return black_spot_map_from_json(nlohmann::json::parse(in));
}

nlohmann::json black_spot_map_to_geojson(const BlackSpotMap& map, const GeoProjection& projection) {
    constexpr int kVertices = 32;
    nlohmann::json features = nlohmann::json::array();
    for (const auto& e : map.ellipses()) {
        const double c = std::cos(e.rotation), s = std::sin(e.rotation);
        nlohmann::json ring = nlohmann::json::array();
        for (int i = 0; i <= kVertices; ++i) {
            const double t = 2.0 * std::numbers::pi * (i % kVertices) / kVertices;
            const double u = e.semi_major * std::cos(t), w = e.semi_minor * std::sin(t);
            const Point2 p{e.center.x + c * u + s * w, e.center.y + s * u - c * w};
            double lat = 0.0, lon = 0.0;
            projection.to_geo(p, lat, lon);
            ring.push_back({lon, lat});
        }
        features.push_back({{"type", "Feature"},
                            {"properties", {{"rmse", e.source_rmse}, {"a", e.semi_major}, {"b", e.semi_minor}, {"rot", e.rotation}}},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
    }
    return {{"type", "FeatureCollection"}, {"properties", {{"mno", map.mno_id()}, {"rmse_max", map.threshold_used()}}},
            {"features", features}};
}

}  // namespace bscb
