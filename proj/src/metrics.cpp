#include "bscb/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bscb/error.hpp"

namespace bscb {

namespace {

// MCS index table 1 for PDSCH/PUSCH: modulation order and target code rate x 1024.
constexpr std::array<int, 29> kMcsQm = {2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 4, 4, 4, 4, 4,
                                        4, 4, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6};
constexpr std::array<int, 29> kMcsRate = {120, 157, 193, 251, 308, 379, 449, 526, 602, 679, 340, 378, 434, 490, 553,
                                          616, 658, 438, 466, 517, 567, 616, 666, 719, 772, 822, 873, 910, 948};
// CQI table 1 entries map onto the MCS with identical modulation and code rate; CQI 1
// (QPSK, 78/1024) is below MCS 0 and uses MCS 0.
constexpr std::array<int, 16> kCqiToMcs = {-1, 0, 0, 2, 4, 6, 8, 11, 13, 15, 18, 20, 22, 24, 26, 28};

constexpr int kRePerPrb = 12 * 14 - 12;

constexpr std::array<int, 93> kSmallTbs = {
    24,   32,   40,   48,   56,   64,   72,   80,   88,   96,   104,  112,  120,  128,  136,  144,  152,  160,  168,
    176,  184,  192,  208,  224,  240,  256,  272,  288,  304,  320,  336,  352,  368,  384,  408,  432,  456,  480,
    504,  528,  552,  576,  608,  640,  672,  704,  736,  768,  808,  848,  888,  928,  984,  1032, 1064, 1128, 1160,
    1192, 1224, 1256, 1288, 1320, 1352, 1416, 1480, 1544, 1608, 1672, 1736, 1800, 1864, 1928, 2024, 2088, 2152, 2216,
    2280, 2408, 2472, 2536, 2600, 2664, 2728, 2792, 2856, 2976, 3104, 3240, 3368, 3496, 3624, 3752, 3824};

std::int64_t ceil_div(std::int64_t a, std::int64_t b) { return (a + b - 1) / b; }

}  // namespace

std::int64_t nr_transport_block_size(int re_per_prb, int prbs, int modulation_order, int code_rate_x1024) {
    if (prbs <= 0 || re_per_prb <= 0) return 0;
    const double n_re = static_cast<double>(std::min(156, re_per_prb)) * prbs;
    const double rate = code_rate_x1024 / 1024.0;
    const double n_info = n_re * rate * modulation_order;
    if (n_info <= 0.0) return 0;
    if (n_info <= 3824.0) {
        const int n = std::max(3, std::ilogb(n_info) - 6);
        const double step = std::ldexp(1.0, n);
        const double quantized = std::max(24.0, step * std::floor(n_info / step));
        for (int tbs : kSmallTbs)
            if (tbs >= quantized) return tbs;
        return kSmallTbs.back();
    }
    const int n = std::ilogb(n_info - 24.0) - 5;
    const double step = std::ldexp(1.0, n);
    const auto quantized = static_cast<std::int64_t>(std::max(3840.0, step * std::round((n_info - 24.0) / step)));
    if (rate <= 0.25) {
        const auto c = ceil_div(quantized + 24, 3816);
        return 8 * c * ceil_div(quantized + 24, 8 * c) - 24;
    }
    if (quantized > 8424) {
        const auto c = ceil_div(quantized + 24, 8424);
        return 8 * c * ceil_div(quantized + 24, 8 * c) - 24;
    }
    return 8 * ceil_div(quantized + 24, 8) - 24;
}

ResourceLookupTable::ResourceLookupTable() : cqi_to_mcs_(kCqiToMcs), mcs_to_tbs_index_(kMcsQm.size()) {
    std::iota(mcs_to_tbs_index_.begin(), mcs_to_tbs_index_.end(), 0);
    tbs_.resize(kMcsQm.size());
    for (std::size_t i = 0; i < kMcsQm.size(); ++i) {
        tbs_[i].resize(kMaxPrb);
        for (int p = 1; p <= kMaxPrb; ++p) tbs_[i][p - 1] = nr_transport_block_size(kRePerPrb, p, kMcsQm[i], kMcsRate[i]);
    }
}

int ResourceLookupTable::mcs_for_cqi(int cqi) const {
    if (cqi < 0 || cqi > 15) throw ConfigError("cqi out of range [0, 15]: " + std::to_string(cqi));
    return cqi_to_mcs_[static_cast<std::size_t>(cqi)];
}

int ResourceLookupTable::tbs_index_for_mcs(int mcs) const {
    if (mcs < 0 || static_cast<std::size_t>(mcs) >= mcs_to_tbs_index_.size())
        throw ConfigError("mcs out of range: " + std::to_string(mcs));
    return mcs_to_tbs_index_[static_cast<std::size_t>(mcs)];
}

std::int64_t ResourceLookupTable::tbs_bits(int cqi, int prbs) const {
    if (prbs < 1 || prbs > max_prb())
        throw ConfigError("PRB count outside table bounds [1, " + std::to_string(max_prb()) + "]: " + std::to_string(prbs));
    const int mcs = mcs_for_cqi(cqi);
    if (mcs < 0) return 0;
    return tbs_[static_cast<std::size_t>(tbs_index_for_mcs(mcs))][static_cast<std::size_t>(prbs - 1)];
}

void ResourceLookupTable::validate() const {
    if (tbs_.empty() || tbs_.front().empty()) throw ConfigError("lookup table: empty TBS table");
    for (const auto& row : tbs_)
        if (row.size() != tbs_.front().size()) throw ConfigError("lookup table: ragged TBS table");
    if (cqi_to_mcs_[0] != -1) throw ConfigError("lookup table: cqi 0 must map to -1");
    for (int idx : mcs_to_tbs_index_)
        if (idx < 0 || static_cast<std::size_t>(idx) >= tbs_.size()) throw ConfigError("lookup table: tbs index out of range");
    for (int cqi = 1; cqi <= 15; ++cqi) {
        const int mcs = cqi_to_mcs_[static_cast<std::size_t>(cqi)];
        if (mcs < 0 || static_cast<std::size_t>(mcs) >= mcs_to_tbs_index_.size())
            throw ConfigError("lookup table: mcs out of range for cqi " + std::to_string(cqi));
    }
    for (int p = 1; p <= max_prb(); ++p) {
        for (int cqi = 1; cqi <= 15; ++cqi) {
            if (tbs_bits(cqi, p) <= 0) throw ConfigError("lookup table: non-positive TBS");
            if (cqi > 1 && tbs_bits(cqi, p) < tbs_bits(cqi - 1, p))
                throw ConfigError("lookup table: TBS decreases with CQI at " + std::to_string(p) + " PRBs");
            if (p > 1 && tbs_bits(cqi, p) < tbs_bits(cqi, p - 1))
                throw ConfigError("lookup table: TBS decreases with PRB count at cqi " + std::to_string(cqi));
        }
    }
}

ResourceLookupTable ResourceLookupTable::from_json(const nlohmann::json& doc) {
    ResourceLookupTable t;
    const auto cqi = doc.at("cqi_to_mcs").get<std::vector<int>>();
    if (cqi.size() != 16) throw ConfigError("lookup table: cqi_to_mcs needs 16 entries");
    std::copy(cqi.begin(), cqi.end(), t.cqi_to_mcs_.begin());
    t.mcs_to_tbs_index_ = doc.at("mcs_to_tbs_index").get<std::vector<int>>();
    t.tbs_ = doc.at("tbs").get<std::vector<std::vector<std::int64_t>>>();
    t.validate();
    return t;
}

nlohmann::json ResourceLookupTable::to_json() const {
    return {{"cqi_to_mcs", cqi_to_mcs_}, {"mcs_to_tbs_index", mcs_to_tbs_index_}, {"tbs", tbs_}};
}

std::int64_t cqi_to_tbs(int cqi, int prbs, const ResourceLookupTable& table) { return table.tbs_bits(cqi, prbs); }

std::int64_t resource_occupation(const TransmissionRecord& tx, const ResourceLookupTable& table, const ResourceConfig& cfg) {
    if (tx.bytes <= 0.0) return 0;
    const auto bits = static_cast<std::int64_t>(std::ceil(tx.bytes * 8.0));
    const std::int64_t tbs = table.tbs_bits(std::max(1, tx.cqi), cfg.bandwidth_prbs);
    return ceil_div(bits * cfg.bandwidth_prbs, tbs);
}

std::int64_t resource_occupation(std::span<const TransmissionRecord> log, const ResourceLookupTable& table,
                                 const ResourceConfig& cfg) {
    std::int64_t total = 0;
    for (const auto& tx : log) total += resource_occupation(tx, table, cfg);
    return total;
}

double PiecewiseLinear::operator()(double x) const {
    if (anchors.empty()) return 0.0;
    if (x <= anchors.front().first) return anchors.front().second;
    if (x >= anchors.back().first) return anchors.back().second;
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        const auto& [x1, y1] = anchors[i];
        if (x <= x1) {
            const auto& [x0, y0] = anchors[i - 1];
            return x1 == x0 ? y1 : y0 + (y1 - y0) * (x - x0) / (x1 - x0);
        }
    }
    return anchors.back().second;
}

double PowerModel::device_power(double tx_dbm) const {
    return tx_dbm < stage_switch_dbm ? low_stage(tx_dbm) : high_stage(tx_dbm);
}

void PowerModel::validate() const {
    auto sorted = [](const PiecewiseLinear& f) {
        for (std::size_t i = 1; i < f.anchors.size(); ++i)
            if (f.anchors[i].first < f.anchors[i - 1].first) return false;
        return !f.anchors.empty();
    };
    if (!sorted(rsrp_to_tx) || !sorted(low_stage) || !sorted(high_stage)) throw ConfigError("power model: anchors must be sorted");
    for (std::size_t i = 1; i < rsrp_to_tx.anchors.size(); ++i)
        if (rsrp_to_tx.anchors[i].second > rsrp_to_tx.anchors[i - 1].second)
            throw ConfigError("power model: tx power must not increase with RSRP");
    for (const auto* f : {&low_stage, &high_stage}) {
        for (std::size_t i = 0; i < f->anchors.size(); ++i) {
            if (!(f->anchors[i].second > 0.0)) throw ConfigError("power model: device power must be > 0");
            if (i > 0 && f->anchors[i].second < f->anchors[i - 1].second)
                throw ConfigError("power model: device power must not decrease with tx power");
        }
    }
    if (low_stage(stage_switch_dbm) > high_stage(stage_switch_dbm))
        throw ConfigError("power model: high stage must not draw less than the low stage at the switch");
    if (!(min_tx_dbm < max_tx_dbm)) throw ConfigError("power model: invalid tx power clamp");
    if (idle_power_w < 0.0) throw ConfigError("power model: idle power must be >= 0");
}

PowerModel PowerModel::from_json(const nlohmann::json& doc) {
    PowerModel m;
    auto anchors = [](const nlohmann::json& j) {
        PiecewiseLinear f;
        for (const auto& a : j) f.anchors.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
        return f;
    };
    if (doc.contains("rsrp_to_tx")) m.rsrp_to_tx = anchors(doc.at("rsrp_to_tx"));
    if (doc.contains("low_stage")) m.low_stage = anchors(doc.at("low_stage"));
    if (doc.contains("high_stage")) m.high_stage = anchors(doc.at("high_stage"));
    m.stage_switch_dbm = doc.value("stage_switch_dbm", m.stage_switch_dbm);
    m.min_tx_dbm = doc.value("min_tx_dbm", m.min_tx_dbm);
    m.max_tx_dbm = doc.value("max_tx_dbm", m.max_tx_dbm);
    m.idle_power_w = doc.value("idle_power_w", m.idle_power_w);
    m.validate();
    return m;
}

nlohmann::json PowerModel::to_json() const {
    auto anchors = [](const PiecewiseLinear& f) {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& [x, y] : f.anchors) j.push_back({x, y});
        return j;
    };
    return {{"rsrp_to_tx", anchors(rsrp_to_tx)}, {"low_stage", anchors(low_stage)},   {"high_stage", anchors(high_stage)},
            {"stage_switch_dbm", stage_switch_dbm},  {"min_tx_dbm", min_tx_dbm},       {"max_tx_dbm", max_tx_dbm},
            {"idle_power_w", idle_power_w}};
}

double tx_power_from_rsrp(double rsrp, const PowerModel& model) {
    return std::clamp(model.rsrp_to_tx(rsrp), model.min_tx_dbm, model.max_tx_dbm);
}

double energy(double duration, double tx_dbm, const PowerModel& model) { return model.device_power(tx_dbm) * duration; }

double energy(const TransmissionRecord& tx, const PowerModel& model) {
    return energy(tx.duration, tx_power_from_rsrp(tx.rsrp, model), model);
}

EfficiencyIndicators efficiency(double mean_rate, double mean_aoi, double s_target, double dt_max) {
    if (!(s_target > 0.0) || !(dt_max > 0.0)) throw ConfigError("efficiency: S* and dt_max must be > 0");
    return {mean_rate / s_target, 1.0 - mean_aoi / dt_max};
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

Quartiles quartiles(std::span<const double> values) {
    Quartiles q;
    q.count = values.size();
    if (values.empty()) return q;
    std::vector<double> v(values.begin(), values.end());
    q.min = *std::min_element(v.begin(), v.end());
    q.max = *std::max_element(v.begin(), v.end());
    q.q1 = quantile(v, 0.25);
    q.median = quantile(v, 0.5);
    q.q3 = quantile(v, 0.75);
    q.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return q;
}

std::vector<std::pair<double, double>> ecdf(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    std::vector<std::pair<double, double>> out;
    const auto n = static_cast<double>(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
        out.emplace_back(values[i], static_cast<double>(i + 1) / n);
    }
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ConfigError("spearman: need two equally sized samples of length >= 2");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sab / std::sqrt(saa * sbb);
}

}  // namespace bscb
