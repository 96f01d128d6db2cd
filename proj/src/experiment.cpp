#include "bscb/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include "bscb/error.hpp"
#include "text_util.hpp"

namespace bscb {

using detail::format_double;
using detail::trim;

KeyValues parse_config_text(const std::string& text) {
    KeyValues kv;
    std::string section;
    int line_no = 0;
    for (const auto& raw : detail::split_lines(text)) {
        ++line_no;
        std::string line = raw;
        // Strip comments outside quotes.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        kv[section.empty() ? key : section + "." + key] = value;
    }
    return kv;
}

KeyValues parse_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

std::string format_config_text(const KeyValues& kv) {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [k, v] : kv) {
        const auto dot = k.find('.');
        sections[dot == std::string::npos ? "" : k.substr(0, dot)].emplace_back(dot == std::string::npos ? k : k.substr(dot + 1), v);
    }
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, entries] : sections) {
        if (!first) out << '\n';
        first = false;
        if (!name.empty()) out << '[' << name << "]\n";
        for (const auto& [k, v] : entries) {
            double d = 0.0;
            const bool bare = v == "true" || v == "false" || detail::parse_double(v, d);
            out << k << " = " << (bare ? v : '"' + v + '"') << '\n';
        }
    }
    return out.str();
}

double default_rmse_max(const std::string& mno_id) {
    if (mno_id == "A") return 3.0;
    if (mno_id == "B") return 2.25;
    if (mno_id == "C") return 2.5;
    throw ConfigError("no default RMSE threshold for operator '" + mno_id + "'");
}

// ---------------------------------------------------------------------------
// Field registry: one binding per configurable key, shared by apply() and to_key_values().

namespace {

struct Field {
    std::string key;
    std::function<void(const std::string&)> set;
    std::function<std::string()> get;
};

double to_double(const std::string& key, const std::string& v) {
    double d = 0.0;
    if (!detail::parse_double(v, d)) throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
    return d;
}

long long to_integer(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d) || std::abs(d) > 9.0e15) throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
    return static_cast<long long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw ConfigError("config key '" + key + "': expected true or false");
}

Field real(std::string key, double& ref) {
    return {key, [&ref, key](const std::string& v) { ref = to_double(key, v); }, [&ref] { return format_double(ref); }};
}

template <class Int>
Field integer(std::string key, Int& ref) {
    return {key,
            [&ref, key](const std::string& v) {
                const long long n = to_integer(key, v);
                if constexpr (std::is_unsigned_v<Int>)
                    if (n < 0) throw ConfigError("config key '" + key + "': must be >= 0");
                ref = static_cast<Int>(n);
            },
            [&ref] { return std::to_string(ref); }};
}

Field flag(std::string key, bool& ref) {
    return {key, [&ref, key](const std::string& v) { ref = to_bool(key, v); }, [&ref] { return std::string(ref ? "true" : "false"); }};
}

Field text(std::string key, std::string& ref) {
    return {key, [&ref](const std::string& v) { ref = v; }, [&ref] { return ref; }};
}

template <class Enum>
Field choice(std::string key, Enum& ref, std::vector<std::pair<std::string, Enum>> options) {
    return {key,
            [&ref, key, options](const std::string& v) {
                for (const auto& [name, e] : options)
                    if (name == v) {
                        ref = e;
                        return;
                    }
                throw ConfigError("config key '" + key + "': unknown value '" + v + "'");
            },
            [&ref, options] {
                for (const auto& [name, e] : options)
                    if (e == ref) return name;
                return std::string();
            }};
}

Field congestion(std::string key, std::vector<CongestionSegment>& ref) {
    return {key,
            [&ref, key](const std::string& v) {
                std::vector<CongestionSegment> out;
                for (const auto& item : detail::split(v, ',')) {
                    const auto parts = detail::split(trim(item), ':');
                    if (parts.size() != 2) throw ConfigError("config key '" + key + "': expected start:multiplier pairs");
                    out.push_back({to_double(key, trim(parts[0])), to_double(key, trim(parts[1]))});
                }
                ref = std::move(out);
            },
            [&ref] {
                std::string s;
                for (const auto& seg : ref) {
                    if (!s.empty()) s += ',';
                    s += format_double(seg.start_fraction) + ":" + format_double(seg.multiplier);
                }
                return s;
            }};
}

std::vector<Field> fields(ExperimentConfig& c) {
    auto& sy = c.synthetic;
    return {
        text("experiment.scheme", c.scheme),
        integer("experiment.epochs", c.epochs),
        integer("experiment.seed", c.seed),
        text("experiment.predictor", c.predictor),
        real("experiment.oracle_sigma", c.oracle_sigma),
        text("trace.train", c.train_trace),
        text("trace.validation", c.validation_trace),
        text("trace.eval", c.eval_trace),

        real("synthetic.track_length", sy.track_length),
        real("synthetic.mean_speed", sy.mean_speed),
        integer("synthetic.hotspot_count", sy.hotspot_count),
        integer("synthetic.layout_seed", sy.layout_seed),
        congestion("synthetic.congestion_profile", sy.congestion_profile),
        integer("synthetic.laps", sy.laps),
        real("synthetic.snapshot_interval", sy.snapshot_interval),
        real("synthetic.start_time", sy.start_time),
        real("synthetic.s_cap", sy.s_cap),
        real("synthetic.payload_half_sat", sy.payload_half_sat),
        real("synthetic.label_noise_sigma", sy.label_noise_sigma),
        real("synthetic.base_sinr", sy.base_sinr),
        real("synthetic.hotspot_gain", sy.hotspot_gain),
        real("synthetic.hotspot_width", sy.hotspot_width),
        real("synthetic.sinr_noise_sigma", sy.sinr_noise_sigma),
        real("synthetic.cell_spacing", sy.cell_spacing),
        integer("synthetic.planted_error_regions", sy.planted_error_regions),
        real("synthetic.planted_error_radius", sy.planted_error_radius),
        real("synthetic.planted_error_sigma", sy.planted_error_sigma),
        real("synthetic.payload_min", sy.payload_min),
        real("synthetic.payload_max", sy.payload_max),
        real("synthetic.eval_payload", sy.fixed_payload),
        text("synthetic.mno", sy.mno_id),
        real("synthetic.ref_lat", sy.projection.ref_lat),
        real("synthetic.ref_lon", sy.projection.ref_lon),

        integer("forest.tree_count", c.forest.tree_count),
        real("forest.sample_fraction", c.forest.sample_fraction),
        flag("forest.bootstrap", c.forest.bootstrap),
        integer("forest.max_features", c.forest.max_features),
        integer("forest.max_depth", c.forest.max_depth),
        integer("forest.min_leaf", c.forest.min_leaf),

        integer("blackspot.n_clusters", c.blackspot.n_clusters),
        real("blackspot.clusters_per_km", c.blackspot.clusters_per_km),
        real("blackspot.rmse_max", c.blackspot.rmse_max),
        choice("blackspot.extent", c.blackspot.ellipse.extent,
               {{"max_projection", EllipseExtent::MaxProjection}, {"two_sigma", EllipseExtent::TwoSigma}}),
        real("blackspot.min_semi_axis", c.blackspot.ellipse.min_semi_axis),
        choice("blackspot.updates", c.blackspot_updates, {{"off", BlackSpotUpdates::Off}, {"idle_reward", BlackSpotUpdates::IdleReward}}),

        real("bandit.delta", c.bandit.delta),
        real("bandit.s_target", c.bandit.s_target),
        real("bandit.s_max", c.bandit.s_max),
        real("bandit.dt_max", c.bandit.dt_max),
        real("bandit.w", c.bandit.w),
        real("bandit.omega", c.bandit.omega_punish),
        choice("bandit.reward_rate", c.bandit.reward_rate_source,
               {{"measured", RewardRateSource::Measured}, {"predicted", RewardRateSource::Predicted}}),
        flag("bandit.intercept", c.bandit.intercept),
        flag("bandit.derive_targets", c.derive_targets),
        real("bandit.target_quantile", c.target_quantile),
        real("bandit.max_quantile", c.max_quantile),

        real("schemes.periodic_interval", c.periodic_interval),
        real("schemes.cat_sinr_min", c.cat.metric_min),
        real("schemes.cat_sinr_max", c.cat.metric_max),
        real("schemes.cat_gamma", c.cat.gamma),
        real("schemes.cat_time_exponent", c.cat.time_exponent),
        real("schemes.mlcat_rate_min", c.mlcat.metric_min),
        real("schemes.mlcat_rate_max", c.mlcat.metric_max),
        real("schemes.mlcat_gamma", c.mlcat.gamma),
        real("schemes.mlcat_time_exponent", c.mlcat.time_exponent),
        real("schemes.rlcat_epsilon_start", c.rlcat.epsilon_start),
        real("schemes.rlcat_epsilon_end", c.rlcat.epsilon_end),
        integer("schemes.rlcat_epsilon_decay_epochs", c.rlcat.epsilon_decay_epochs),
        real("schemes.rlcat_learning_rate", c.rlcat.learning_rate),
        real("schemes.rlcat_discount", c.rlcat.discount),

        real("replay.source_rate", c.source_rate),
        real("replay.residual_sigma", c.channel.residual_sigma),
        real("replay.payload_saturation", c.channel.payload_saturation),
        real("replay.min_rate", c.channel.min_rate),
        integer("replay.bandwidth_prbs", c.bandwidth_prbs),
        real("replay.idle_power", c.idle_power_w),
        text("replay.power_model", c.power_model),
        text("replay.tbs_table", c.tbs_table),
    };
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
    blackspot.n_clusters = 100;
    blackspot.rmse_max = default_rmse_max(synthetic.mno_id);
}

void ExperimentConfig::apply(const KeyValues& kv) {
    auto table = fields(*this);
    // The operator id picks the RMSE default unless the threshold is given explicitly.
    const bool explicit_rmse = kv.count("blackspot.rmse_max") > 0;
    for (const auto& [key, value] : kv) {
        const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
        it->set(value);
    }
    if (kv.count("synthetic.mno") && !explicit_rmse) blackspot.rmse_max = default_rmse_max(synthetic.mno_id);
}

KeyValues ExperimentConfig::to_key_values() const {
    KeyValues kv;
    for (const auto& f : fields(const_cast<ExperimentConfig&>(*this))) kv[f.key] = f.get();
    return kv;
}

void ExperimentConfig::validate() const {
    const auto names = scheme_names();
    if (std::find(names.begin(), names.end(), scheme) == names.end()) throw ConfigError("unknown scheme '" + scheme + "'");
    if (epochs < 1) throw ConfigError("experiment.epochs must be >= 1");
    if (predictor != "forest" && predictor != "oracle") throw ConfigError("experiment.predictor must be forest or oracle");
    if (!(oracle_sigma >= 0.0)) throw ConfigError("experiment.oracle_sigma must be >= 0");
    synthetic.validate();
    forest.validate();
    if (!(blackspot.rmse_max > 0.0)) throw ConfigError("blackspot.rmse_max must be > 0");
    if (blackspot.n_clusters == 0 && !(blackspot.clusters_per_km > 0.0))
        throw ConfigError("blackspot.clusters_per_km must be > 0 when n_clusters is 0");
    if (!derive_targets) bandit.validate();
    if (!(target_quantile > 0.0 && target_quantile <= 1.0 && max_quantile > 0.0 && max_quantile <= 1.0))
        throw ConfigError("bandit quantiles must lie in (0, 1]");
    if (!(periodic_interval > 0.0)) throw ConfigError("schemes.periodic_interval must be > 0");
    rlcat.validate();
    if (!(source_rate > 0.0)) throw ConfigError("replay.source_rate must be > 0");
    channel.validate();
    if (!(idle_power_w >= 0.0)) throw ConfigError("replay.idle_power must be >= 0");
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    ExperimentConfig cfg;
    cfg.apply(parse_config_file(path));
    return cfg;
}

// ---------------------------------------------------------------------------

namespace {

DriveTrace trace_from(const ExperimentConfig& cfg, const std::string& path, std::uint64_t noise_seed, PayloadMode mode) {
    if (!path.empty()) {
        if (!std::filesystem::exists(path)) throw ConfigError("trace file not found: " + path);
        ParseOptions opts;
        opts.mno_id = cfg.synthetic.mno_id;
        opts.projection = cfg.synthetic.projection;
        return parse_trace(path, opts);
    }
    SyntheticScenarioConfig sy = cfg.synthetic;
    sy.noise_seed = noise_seed;
    sy.payload_mode = mode;
    return generate_synthetic_trace(sy);
}

}  // namespace

std::vector<DriveTrace> load_traces(const ExperimentConfig& cfg) {
    // Independent noise realizations over one layout: fit, validation and replay drives.
    const std::uint64_t base = cfg.seed * 3;
    return {trace_from(cfg, cfg.train_trace, base, PayloadMode::Random),
            trace_from(cfg, cfg.validation_trace, base + 1, PayloadMode::Random),
            trace_from(cfg, cfg.eval_trace, base + 2, PayloadMode::Fixed)};
}

std::shared_ptr<const ForestModel> train_predictor(const ExperimentConfig& cfg, const DriveTrace& train) {
    ForestConfig fc = cfg.forest;
    fc.seed = cfg.seed;
    const auto rows = labeled_rows(train);
    return std::make_shared<const ForestModel>(train_forest(rows, fc));
}

std::shared_ptr<const RatePredictor> make_predictor(const ExperimentConfig& cfg, std::shared_ptr<const ForestModel> forest) {
    if (cfg.predictor == "oracle") return std::make_shared<OraclePredictor>(cfg.oracle_sigma, cfg.seed);
    if (!forest) throw ConfigError("forest predictor selected but no model is available");
    return std::make_shared<ForestPredictor>(std::move(forest));
}

BlackSpotBuild build_black_spots(const ExperimentConfig& cfg, const RatePredictor& predictor, const DriveTrace& validation) {
    const auto records = prediction_records(predictor, validation);
    BlackSpotConfig bc = cfg.blackspot;
    bc.seed = cfg.seed;
    double path = 0.0;
    for (std::size_t i = 1; i < validation.snapshots.size(); ++i)
        path += distance(validation.snapshots[i - 1].position, validation.snapshots[i].position);
    return build_black_spot_map(records, bc, validation.mno_id, path);
}

BanditConfig resolve_targets(const ExperimentConfig& cfg, const DriveTrace& train) {
    BanditConfig b = cfg.bandit;
    if (cfg.derive_targets) {
        std::vector<double> labels;
        for (const auto& s : train.snapshots)
            if (s.measured_rate) labels.push_back(*s.measured_rate);
        if (labels.empty()) throw ConfigError("cannot derive rate targets: training trace has no labels");
        b.s_target = quantile(labels, cfg.target_quantile);
        b.s_max = quantile(labels, cfg.max_quantile);
        if (!(b.s_max > 0.0)) throw ConfigError("derived S_max is not positive");
        if (b.s_target <= 0.0) b.s_target = b.s_max;
    }
    b.validate();
    return b;
}

Workbench prepare(const ExperimentConfig& cfg, std::shared_ptr<const ForestModel> forest, std::shared_ptr<const BlackSpotMap> map) {
    cfg.validate();
    Workbench wb;
    wb.cfg = cfg;
    auto traces = load_traces(cfg);
    wb.train = std::move(traces[0]);
    wb.validation = std::move(traces[1]);
    wb.eval = std::move(traces[2]);

    if (cfg.predictor == "forest") wb.forest = forest ? std::move(forest) : train_predictor(cfg, wb.train);
    wb.predictor = make_predictor(cfg, wb.forest);

    if (map) {
        wb.black_spots = std::move(map);
    } else {
        auto build = build_black_spots(cfg, *wb.predictor, wb.validation);
        wb.black_spots = std::make_shared<const BlackSpotMap>(std::move(build.map));
        wb.clusters = std::move(build.clusters);
    }
    wb.bandit = resolve_targets(cfg, wb.train);

    wb.replay.source_rate = cfg.source_rate;
    wb.replay.dt_max = wb.bandit.dt_max;
    wb.replay.channel = cfg.channel;
    wb.replay.channel.seed = cfg.seed;
    wb.replay.resources.bandwidth_prbs = cfg.bandwidth_prbs;
    if (!cfg.power_model.empty()) {
        std::ifstream in(cfg.power_model);
        if (!in) throw ConfigError("power model file not found: " + cfg.power_model);
        wb.replay.power = PowerModel::from_json(nlohmann::json::parse(in));
    }
    wb.replay.power.idle_power_w = cfg.idle_power_w;
    if (!cfg.tbs_table.empty()) {
        std::ifstream in(cfg.tbs_table);
        if (!in) throw ConfigError("TBS table file not found: " + cfg.tbs_table);
        wb.replay.table = std::make_shared<ResourceLookupTable>(ResourceLookupTable::from_json(nlohmann::json::parse(in)));
    }
    wb.replay.black_spots = wb.black_spots;
    wb.replay.validate();
    return wb;
}

std::vector<std::string> scheme_names() { return {"periodic", "cat", "mlcat", "rlcat", "bscb", "linucb"}; }

std::unique_ptr<Scheme> make_scheme(const std::string& name, const Workbench& wb) {
    const auto& cfg = wb.cfg;
    if (name == "periodic") return std::make_unique<PeriodicScheme>(cfg.periodic_interval);
    if (name == "cat") {
        ProbabilisticConfig p = cfg.cat;
        p.dt_max = wb.bandit.dt_max;
        return std::make_unique<CatScheme>(p, cfg.seed, false);
    }
    if (name == "mlcat") {
        ProbabilisticConfig p = cfg.mlcat;
        p.dt_max = wb.bandit.dt_max;
        if (p.metric_max == 0.0) p.metric_max = wb.bandit.s_max;
        return std::make_unique<CatScheme>(p, cfg.seed, true);
    }
    if (name == "rlcat") return std::make_unique<RlCatScheme>(wb.bandit, cfg.rlcat, cfg.seed);
    if (name == "bscb") {
        if (!wb.black_spots) throw ConfigError("scheme bscb requires a black-spot map");
        return std::make_unique<BsCbScheme>(wb.bandit, wb.black_spots, cfg.blackspot_updates);
    }
    if (name == "linucb")
        return std::make_unique<BsCbScheme>(wb.bandit, std::make_shared<const BlackSpotMap>(BlackSpotMap({}, wb.eval.mno_id, cfg.blackspot.rmse_max)),
                                            cfg.blackspot_updates);
    throw ConfigError("unknown scheme '" + name + "'");
}

std::vector<SweepPoint> run_sweep(const ExperimentConfig& cfg, const std::string& key, const std::vector<std::string>& values,
                                  std::shared_ptr<const ForestModel> forest, std::shared_ptr<const BlackSpotMap> map) {
    if (values.empty()) throw ConfigError("sweep: empty value grid");
    const bool reusable = key.rfind("bandit.", 0) == 0 || key.rfind("schemes.", 0) == 0 || key.rfind("replay.", 0) == 0;
    if (reusable && (!forest || !map)) {
        // Build the shared stages once from the unmodified configuration.
        const Workbench base = prepare(cfg, forest, map);
        forest = base.forest;
        map = base.black_spots;
    }
    std::vector<SweepPoint> out;
    for (const auto& v : values) {
        ExperimentConfig c = cfg;
        c.apply({{key, v}});
        const Workbench wb = reusable ? prepare(c, forest, map) : prepare(c);
        auto scheme = make_scheme(c.scheme, wb);
        const auto report = run_training(wb.eval, *scheme, *wb.predictor, wb.replay, scheme->learns() ? c.epochs : 1, nullptr,
                                         EventLogMode::None);
        const std::size_t n = std::min<std::size_t>(kConvergenceWindow, report.epochs.size());
        SweepPoint p;
        p.value = v;
        for (std::size_t k = report.epochs.size() - n; k < report.epochs.size(); ++k) {
            p.mean_rate += report.epochs[k].mean_data_rate / static_cast<double>(n);
            p.mean_aoi += report.epochs[k].mean_aoi / static_cast<double>(n);
        }
        const auto eff = efficiency(p.mean_rate, p.mean_aoi, wb.bandit.s_target, wb.bandit.dt_max);
        p.e_s = eff.e_s;
        p.e_aoi = eff.e_aoi;
        p.convergence_epoch = report.convergence_epoch;
        out.push_back(std::move(p));
    }
    return out;
}

std::string sweep_csv(const std::string& key, const std::vector<SweepPoint>& points) {
    using detail::format_double;
    std::ostringstream out;
    out << key << ",e_s,e_aoi,mean_rate,mean_aoi,convergence_epoch\n";
    for (const auto& p : points)
        out << p.value << ',' << format_double(p.e_s) << ',' << format_double(p.e_aoi) << ',' << format_double(p.mean_rate) << ','
            << format_double(p.mean_aoi) << ',' << p.convergence_epoch << '\n';
    return out.str();
}

std::string config_fingerprint(const ExperimentConfig& cfg) {
    auto kv = cfg.to_key_values();
    kv.erase("experiment.scheme");
    kv.erase("experiment.seed");
    // FNV-1a over the canonical text.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : format_config_text(kv)) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << h;
    return out.str();
}

}  // namespace bscb
