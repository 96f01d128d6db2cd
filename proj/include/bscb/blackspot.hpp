#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscb/predictor.hpp"
#include "bscb/trace.hpp"

namespace bscb {

struct Cluster {
    Point2 centroid;
    std::vector<std::size_t> members;  // indices into the clustered point list
    double rmse = 0.0;                 // MBit/s, over members
};

struct KMeansResult {
    std::vector<Cluster> clusters;
    std::vector<std::size_t> assignment;  // point -> cluster index
    /// Within-cluster sum of squares recorded after every assignment and every centroid update.
    std::vector<double> inertia_trace;
    int iterations = 0;
    bool converged = false;

    double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

inline constexpr int kKMeansMaxIterations = 300;

/// k-means++ seeding followed by Lloyd iterations until the assignment is a fixpoint (or the
/// iteration cap). Empty clusters are re-seeded from the point farthest from its centroid.
KMeansResult kmeans(std::span<const Point2> points, std::size_t k, std::uint64_t seed,
                    int max_iterations = kKMeansMaxIterations);
std::vector<Cluster> kmeans_cluster(std::span<const Point2> points, std::size_t k, std::uint64_t seed);

/// Fills each cluster's rmse from the records its member indices refer to.
void assign_cluster_rmse(std::vector<Cluster>& clusters, std::span<const PredictionRecord> records);

/// Clusters whose rmse strictly exceeds rmse_max.
std::vector<Cluster> classify_black_spots(std::span<const Cluster> clusters, double rmse_max);

struct BlackSpotEllipse {
    Point2 center;
    double semi_major = 0.0;  // a, m
    double semi_minor = 0.0;  // b, m
    double rotation = 0.0;    // radians, [-pi/2, pi/2)
    double source_rmse = 0.0;
};

enum class EllipseExtent { MaxProjection, TwoSigma };

struct EllipseFitOptions {
    EllipseExtent extent = EllipseExtent::MaxProjection;
    double min_semi_axis = 10.0;  // m
};

/// Principal-axis ellipse around the cluster members. With MaxProjection the extents are the
/// largest member projections on each axis, inflated uniformly until every member is inside.
BlackSpotEllipse fit_ellipse(const Cluster& cluster, std::span<const Point2> positions,
                             const EllipseFitOptions& options = {});

/// Rotated-ellipse containment test (boundary inclusive).
bool point_in_ellipse(Point2 p, const BlackSpotEllipse& e);

struct BoundingBox {
    double min_x, min_y, max_x, max_y;
    bool contains(Point2 p) const { return p.x >= min_x && p.x <= max_x && p.y >= min_y && p.y <= max_y; }
};
BoundingBox bounding_box(const BlackSpotEllipse& e);

class BlackSpotMap {
public:
    BlackSpotMap() = default;
    BlackSpotMap(std::vector<BlackSpotEllipse> ellipses, std::string mno_id, double threshold_used);

    const std::vector<BlackSpotEllipse>& ellipses() const { return ellipses_; }
    const std::string& mno_id() const { return mno_id_; }
    double threshold_used() const { return threshold_; }
    bool empty() const { return ellipses_.empty(); }

    /// True iff any ellipse contains p; bounding boxes are checked first.
    bool contains(Point2 p) const;
    bool contains_exhaustive(Point2 p) const;

private:
    std::vector<BlackSpotEllipse> ellipses_;
    std::vector<BoundingBox> boxes_;
    std::string mno_id_;
    double threshold_ = 0.0;
};

inline bool in_black_spot(Point2 p, const BlackSpotMap& map) { return map.contains(p); }

struct BlackSpotConfig {
    /// 0 derives the count from clusters_per_km and the clustered path length.
    std::size_t n_clusters = 0;
    double clusters_per_km = 4.0;
    double rmse_max = 3.0;
    std::uint64_t seed = 1;
    EllipseFitOptions ellipse;
};

struct BlackSpotBuild {
    BlackSpotMap map;
    std::vector<Cluster> clusters;
    std::size_t n_clusters = 0;
};

/// Offline pipeline: k-means on record positions, per-cluster RMSE, threshold, ellipse fit.
BlackSpotBuild build_black_spot_map(std::span<const PredictionRecord> records, const BlackSpotConfig& cfg,
                                    const std::string& mno_id, double path_length_m = 0.0);

struct BlackSpotRun {
    std::size_t first = 0;  // snapshot indices, inclusive
    std::size_t last = 0;
    double distance = 0.0;  // m
    double duration = 0.0;  // s
};

/// Contiguous in-black-spot runs along the trace.
std::vector<BlackSpotRun> black_spot_statistics(const DriveTrace& trace, const BlackSpotMap& map);
/// ECDF points of run distance and duration, header `quantity,value,probability`.
std::string black_spot_ecdf_csv(const std::vector<BlackSpotRun>& runs);

nlohmann::json black_spot_map_to_json(const BlackSpotMap& map);
BlackSpotMap black_spot_map_from_json(const nlohmann::json& doc);
void save_black_spot_map(const BlackSpotMap& map, const std::filesystem::path& path);
BlackSpotMap load_black_spot_map(const std::filesystem::path& path);

/// GeoJSON FeatureCollection with one 32-gon polygon per ellipse, in lon/lat.
nlohmann::json black_spot_map_to_geojson(const BlackSpotMap& map, const GeoProjection& projection);

}  // namespace bscb
