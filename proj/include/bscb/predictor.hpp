#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "bscb/trace.hpp"

namespace bscb {

inline constexpr std::size_t kFeatureCount = 10;
using FeatureVector = std::array<double, kFeatureCount>;

/// Feature order: rsrp, rsrq, sinr, cqi, ta, carrier_freq, velocity, cell_id_hash,
/// payload_size, timestamp_of_day. The order is part of the model file format.
const std::array<std::string, kFeatureCount>& feature_names();
inline constexpr std::size_t kPayloadFeature = 8;

/// Maps a cell identifier to [0, 1). The empty identifier maps to 0.
double hash_cell_id(const std::string& cell_id);

FeatureVector extract_features(const ContextSnapshot& s);

/// Arrayed binary regression tree. A node with feature < 0 is a leaf.
struct RegressionTree {
    struct Node {
        int feature = -1;
        double threshold = 0.0;  // go left iff x[feature] <= threshold
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;      // leaf mean (MBit/s)
    };
    std::vector<Node> nodes;

    double evaluate(const FeatureVector& x) const;
    std::size_t depth() const;
    std::size_t leaf_count() const;
};

struct ForestConfig {
    int tree_count = 20;
    double sample_fraction = 0.8;
    bool bootstrap = true;
    /// Features considered per split; 0 selects round(sqrt(d)).
    int max_features = 0;
    /// 0 means unlimited.
    int max_depth = 12;
    int min_leaf = 5;
    std::uint64_t seed = 42;

    void validate() const;
};

struct LabeledRow {
    FeatureVector features{};
    double label = 0.0;
};

struct ForestModel {
    std::vector<RegressionTree> trees;
    std::array<std::string, kFeatureCount> feature_names_used = feature_names();
    ForestConfig meta;
    /// Out-of-bag RMSE (MBit/s); NaN when no row was ever out of bag.
    double oob_rmse = 0.0;

    double predict(const FeatureVector& x) const;
};

ForestModel train_forest(std::span<const LabeledRow> data, const ForestConfig& cfg);
double predict(const ForestModel& model, const ContextSnapshot& s);

/// Rows for every labeled snapshot of the trace.
std::vector<LabeledRow> labeled_rows(const DriveTrace& trace);

nlohmann::json forest_to_json(const ForestModel& model);
ForestModel forest_from_json(const nlohmann::json& doc);
void save_forest(const ForestModel& model, const std::filesystem::path& path);
ForestModel load_forest(const std::filesystem::path& path);

/// Predicted-vs-measured pair at a location.
struct PredictionRecord {
    Point2 position;
    double predicted = 0.0;  // MBit/s
    double measured = 0.0;   // MBit/s
};

/// Root mean squared difference between predicted and measured rates.
double prediction_rmse(std::span<const PredictionRecord> records);

/// Source of S~ for the simulator. Implementations are immutable after construction.
class RatePredictor {
public:
    virtual ~RatePredictor() = default;
    virtual double predict(const ContextSnapshot& s) const = 0;
};

class ForestPredictor final : public RatePredictor {
public:
    explicit ForestPredictor(std::shared_ptr<const ForestModel> model) : model_(std::move(model)) {}
    double predict(const ContextSnapshot& s) const override;
    const ForestModel& model() const { return *model_; }

private:
    std::shared_ptr<const ForestModel> model_;
};

/// Returns the snapshot's ground-truth label plus zero-mean Gaussian noise, clamped at 0.
/// The noise is a pure function of (seed, timestamp), so repeated queries agree.
class OraclePredictor final : public RatePredictor {
public:
    OraclePredictor(double noise_sigma, std::uint64_t seed) : sigma_(noise_sigma), seed_(seed) {}
    double predict(const ContextSnapshot& s) const override;

private:
    double sigma_;
    std::uint64_t seed_;
};

/// Prediction records for every labeled snapshot.
std::vector<PredictionRecord> prediction_records(const RatePredictor& predictor, const DriveTrace& trace);

}  // namespace bscb
