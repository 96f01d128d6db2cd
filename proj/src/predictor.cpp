#include "bscb/predictor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "bscb/error.hpp"

namespace bscb {

namespace {

constexpr int kModelVersion = 1;

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double gain = -1.0;
};

class TreeBuilder {
public:
    TreeBuilder(std::span<const LabeledRow> data, const ForestConfig& cfg, std::mt19937_64& rng)
        : data_(data), cfg_(cfg), rng_(rng) {
        mtry_ = cfg.max_features > 0 ? std::min<int>(cfg.max_features, kFeatureCount)
                                     : std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(kFeatureCount)))));
    }

    RegressionTree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    std::int32_t grow(std::vector<std::size_t>& rows, int depth) {
        const auto id = static_cast<std::int32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();

        double sum = 0.0;
        for (auto r : rows) sum += data_[r].label;
        const double mean = sum / static_cast<double>(rows.size());
        double sse = 0.0;
        for (auto r : rows) sse += (data_[r].label - mean) * (data_[r].label - mean);
        tree_.nodes[id].value = mean;

        const bool depth_ok = cfg_.max_depth <= 0 || depth < cfg_.max_depth;
        if (!depth_ok || sse <= 1e-12 * std::max(1.0, mean * mean) ||
            rows.size() < 2 * static_cast<std::size_t>(cfg_.min_leaf))
            return id;

        const auto split = best_split(rows, sum, sse);
        if (split.feature < 0) return id;

        std::vector<std::size_t> left, right;
        for (auto r : rows) (data_[r].features[split.feature] <= split.threshold ? left : right).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree_.nodes[id].feature = split.feature;
        tree_.nodes[id].threshold = split.threshold;
        const auto l = grow(left, depth + 1);
        tree_.nodes[id].left = l;
        const auto r = grow(right, depth + 1);
        tree_.nodes[id].right = r;
        return id;
    }

    SplitChoice best_split(const std::vector<std::size_t>& rows, double total, double total_sse) {
        std::vector<int> features(kFeatureCount);
        std::iota(features.begin(), features.end(), 0);
        if (mtry_ < static_cast<int>(kFeatureCount)) {
            std::shuffle(features.begin(), features.end(), rng_);
            features.resize(mtry_);
            std::sort(features.begin(), features.end());
        }

        const auto n = rows.size();
        const auto min_leaf = static_cast<std::size_t>(std::max(1, cfg_.min_leaf));
        SplitChoice best;
        std::vector<std::pair<double, double>> column(n);
        for (int f : features) {
            for (std::size_t i = 0; i < n; ++i) column[i] = {data_[rows[i]].features[f], data_[rows[i]].label};
            std::sort(column.begin(), column.end());
            double left_sum = 0.0;
            for (std::size_t i = 0; i + 1 < n; ++i) {
                left_sum += column[i].second;
                if (column[i].first == column[i + 1].first) continue;
                const std::size_t nl = i + 1, nr = n - nl;
                if (nl < min_leaf || nr < min_leaf) continue;
                const double right_sum = total - left_sum;
                // SSE reduction = nl*mean_l^2 + nr*mean_r^2 - n*mean^2
                const double gain = left_sum * left_sum / nl + right_sum * right_sum / nr - total * total / n;
                const double threshold = 0.5 * (column[i].first + column[i + 1].first);
                // Strict improvement keeps the lowest feature index and lowest threshold among ties.
                if (gain > best.gain + 1e-12 * std::max(1.0, total_sse)) {
                    best = {f, threshold, gain};
                }
            }
        }
        return best;
    }

    std::span<const LabeledRow> data_;
    const ForestConfig& cfg_;
    std::mt19937_64& rng_;
    int mtry_ = 1;
    RegressionTree tree_;
};

}  // namespace

const std::array<std::string, kFeatureCount>& feature_names() {
    static const std::array<std::string, kFeatureCount> names = {
        "rsrp", "rsrq", "sinr", "cqi", "ta", "carrier_freq", "velocity", "cell_id_hash", "payload_size", "timestamp_of_day"};
    return names;
}

double hash_cell_id(const std::string& cell_id) {
    if (cell_id.empty()) return 0.0;
    return static_cast<double>(fnv1a(cell_id) >> 11) * 0x1.0p-53;
}

FeatureVector extract_features(const ContextSnapshot& s) {
    return {s.rsrp,
            s.rsrq,
            s.sinr,
            static_cast<double>(s.cqi),
            static_cast<double>(s.ta),
            s.carrier_freq,
            s.velocity,
            hash_cell_id(s.cell_id),
            s.payload_size,
            std::fmod(s.timestamp, 86400.0)};
}

double RegressionTree::evaluate(const FeatureVector& x) const {
    std::size_t i = 0;
    while (nodes[i].feature >= 0) {
        i = static_cast<std::size_t>(x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                                                          : nodes[i].right);
    }
    return nodes[i].value;
}

std::size_t RegressionTree::depth() const {
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    std::size_t deepest = 0;
    while (!stack.empty()) {
        auto [i, d] = stack.back();
        stack.pop_back();
        deepest = std::max(deepest, d);
        if (nodes[i].feature >= 0) {
            stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
            stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
        }
    }
    return deepest;
}

std::size_t RegressionTree::leaf_count() const {
    return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const Node& n) { return n.feature < 0; }));
}

void ForestConfig::validate() const {
    if (tree_count < 1) throw ConfigError("forest: tree_count must be >= 1");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0)) throw ConfigError("forest: sample_fraction must be in (0, 1]");
    if (max_features < 0 || max_features > static_cast<int>(kFeatureCount))
        throw ConfigError("forest: max_features must be in [0, 10]");
    if (max_depth < 0) throw ConfigError("forest: max_depth must be >= 0");
    if (min_leaf < 1) throw ConfigError("forest: min_leaf must be >= 1");
}

double ForestModel::predict(const FeatureVector& x) const {
    double sum = 0.0;
    for (const auto& t : trees) sum += t.evaluate(x);
    return sum / static_cast<double>(trees.size());
}

ForestModel train_forest(std::span<const LabeledRow> data, const ForestConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw ConfigError("forest: empty training data");
    if (data.size() < 10) throw ConfigError("forest: at least 10 labeled rows required");
    for (const auto& row : data) {
        if (!(row.label >= 0.0) || !std::isfinite(row.label)) throw ConfigError("forest: labels must be finite and >= 0");
    }

    const std::size_t n = data.size();
    const auto sample_size = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(cfg.sample_fraction * n)));

    ForestModel model;
    model.meta = cfg;
    std::vector<double> oob_sum(n, 0.0);
    std::vector<int> oob_count(n, 0);

    for (int t = 0; t < cfg.tree_count; ++t) {
        std::mt19937_64 rng(splitmix(cfg.seed + static_cast<std::uint64_t>(t)));
        std::vector<std::size_t> rows;
        std::vector<char> in_bag(n, 0);
        if (cfg.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (std::size_t i = 0; i < sample_size; ++i) {
                const auto r = pick(rng);
                rows.push_back(r);
                in_bag[r] = 1;
            }
        } else {
            rows.resize(n);
            std::iota(rows.begin(), rows.end(), 0);
            if (sample_size < n) {
                std::shuffle(rows.begin(), rows.end(), rng);
                rows.resize(sample_size);
            }
            std::sort(rows.begin(), rows.end());
            for (auto r : rows) in_bag[r] = 1;
        }
        TreeBuilder builder(data, cfg, rng);
        model.trees.push_back(builder.build(std::move(rows)));
        for (std::size_t i = 0; i < n; ++i) {
            if (!in_bag[i]) {
                oob_sum[i] += model.trees.back().evaluate(data[i].features);
                ++oob_count[i];
            }
        }
    }

    double sq = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (oob_count[i] == 0) continue;
        const double e = oob_sum[i] / oob_count[i] - data[i].label;
        sq += e * e;
        ++m;
    }
    model.oob_rmse = m > 0 ? std::sqrt(sq / static_cast<double>(m)) : std::numeric_limits<double>::quiet_NaN();
    return model;
}

double predict(const ForestModel& model, const ContextSnapshot& s) { return model.predict(extract_features(s)); }

std::vector<LabeledRow> labeled_rows(const DriveTrace& trace) {
    std::vector<LabeledRow> rows;
    for (const auto& s : trace.snapshots) {
        if (s.measured_rate) rows.push_back({extract_features(s), *s.measured_rate});
    }
    return rows;
}

nlohmann::json forest_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : model.trees) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
        for (const auto& node : t.nodes) {
            feature.push_back(node.feature);
            threshold.push_back(node.threshold);
            left.push_back(node.left);
            right.push_back(node.right);
            value.push_back(node.value);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    const auto& m = model.meta;
    return {
        {"format", "bscb-forest"},
        {"version", kModelVersion},
        {"feature_names", model.feature_names_used},
        {"meta",
         {{"tree_count", m.tree_count},
          {"sample_fraction", m.sample_fraction},
          {"bootstrap", m.bootstrap},
          {"max_features", m.max_features},
          {"max_depth", m.max_depth},
          {"min_leaf", m.min_leaf},
          {"seed", m.seed}}},
        {"oob_rmse", std::isfinite(model.oob_rmse) ? nlohmann::json(model.oob_rmse) : nlohmann::json(nullptr)},
        {"trees", trees},
    };
}

ForestModel forest_from_json(const nlohmann::json& doc) {
    if (doc.value("format", "") != "bscb-forest") throw ConfigError("model: not a forest document");
    if (doc.value("version", 0) != kModelVersion)
        throw ConfigError("model: unsupported version " + std::to_string(doc.value("version", 0)));
    ForestModel model;
    const auto names = doc.at("feature_names").get<std::vector<std::string>>();
    if (names.size() != kFeatureCount || !std::equal(names.begin(), names.end(), feature_names().begin()))
        throw ConfigError("model: feature layout does not match this build");
    const auto& m = doc.at("meta");
    model.meta.tree_count = m.at("tree_count").get<int>();
    model.meta.sample_fraction = m.at("sample_fraction").get<double>();
    model.meta.bootstrap = m.at("bootstrap").get<bool>();
    model.meta.max_features = m.at("max_features").get<int>();
    model.meta.max_depth = m.at("max_depth").get<int>();
    model.meta.min_leaf = m.at("min_leaf").get<int>();
    model.meta.seed = m.at("seed").get<std::uint64_t>();
    model.oob_rmse = doc.at("oob_rmse").is_null() ? std::numeric_limits<double>::quiet_NaN() : doc.at("oob_rmse").get<double>();
    for (const auto& t : doc.at("trees")) {
        RegressionTree tree;
        const auto feature = t.at("feature").get<std::vector<int>>();
        const auto threshold = t.at("threshold").get<std::vector<double>>();
        const auto left = t.at("left").get<std::vector<std::int32_t>>();
        const auto right = t.at("right").get<std::vector<std::int32_t>>();
        const auto value = t.at("value").get<std::vector<double>>();
        const auto count = feature.size();
        if (count == 0 || threshold.size() != count || left.size() != count || right.size() != count || value.size() != count)
            throw ConfigError("model: malformed tree arrays");
        for (std::size_t i = 0; i < count; ++i) {
            RegressionTree::Node node{feature[i], threshold[i], left[i], right[i], value[i]};
            if (node.feature >= static_cast<int>(kFeatureCount)) throw ConfigError("model: feature index out of range");
            if (node.feature >= 0 && (node.left <= 0 || node.right <= 0 || static_cast<std::size_t>(node.left) >= count ||
                                      static_cast<std::size_t>(node.right) >= count))
                throw ConfigError("model: internal node without two valid children");
            if (!std::isfinite(node.value)) throw ConfigError("model: non-finite leaf value");
            tree.nodes.push_back(node);
        }
        model.trees.push_back(std::move(tree));
    }
    if (model.trees.empty()) throw ConfigError("model: no trees");
    return model;
}

void save_forest(const ForestModel& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write model file: " + path.string());
    out << forest_to_json(model).dump() << '\n';
}

ForestModel load_forest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open model file: " + path.string());
    return forest_from_json(nlohmann::json::parse(in));
}

double prediction_rmse(std::span<const PredictionRecord> records) {
    if (records.empty()) throw ConfigError("rmse: empty record list");
    double sq = 0.0;
    for (const auto& r : records) sq += (r.predicted - r.measured) * (r.predicted - r.measured);
    return std::sqrt(sq / static_cast<double>(records.size()));
}

double ForestPredictor::predict(const ContextSnapshot& s) const { return model_->predict(extract_features(s)); }

double OraclePredictor::predict(const ContextSnapshot& s) const {
    const double label = s.measured_rate.value_or(0.0);
    if (sigma_ == 0.0) return label;
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(double));
    std::memcpy(&bits, &s.timestamp, sizeof(bits));
    std::mt19937_64 rng(splitmix(seed_ ^ splitmix(bits)));
    std::normal_distribution<double> noise(0.0, sigma_);
    return std::max(0.0, label + noise(rng));
}

std::vector<PredictionRecord> prediction_records(const RatePredictor& predictor, const DriveTrace& trace) {
    std::vector<PredictionRecord> out;
    for (const auto& s : trace.snapshots) {
        if (s.measured_rate) out.push_back({s.position, predictor.predict(s), *s.measured_rate});
    }
    return out;
}

}  // namespace bscb
