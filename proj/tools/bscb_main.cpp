// bscb: train, cluster, simulate, sweep and report from one key-value config.
// Every command writes run.json next to its outputs; `--config <dir>/run.json` replays it.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "bscb/error.hpp"
#include "bscb/experiment.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bscb;

namespace {

struct Globals {
    std::string config;
    std::vector<std::string> sets;
    long long seed = -1;
    std::string out = ".";
};

struct Args {
    std::string model;
    std::string map;
    std::string resume_state;
    bool log_all = false;
    std::string param = "bandit.w";
    std::string values = "0.5,0.6,0.7,0.8,0.9,1.0";
    std::string baseline = "periodic";
    std::vector<std::string> runs;
};

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json read_json(const fs::path& path, const char* what) {
    if (!fs::exists(path)) throw ConfigError(std::string(what) + " not found: " + path.string());
    std::ifstream in(path, std::ios::binary);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": malformed JSON: " + e.what());
    }
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

/// Config from --config (TOML or run.json), then --set, then --seed. Args recorded in a
/// run.json fill options the command line left unset.
ExperimentConfig resolve_config(const Globals& g, const std::string& command, Args& args, const Args& defaults) {
    ExperimentConfig cfg;
    if (!g.config.empty()) {
        if (fs::path(g.config).extension() == ".json") {
            const json doc = read_json(g.config, "config file");
            if (!doc.contains("config")) throw ConfigError(g.config + ": not a run.json (missing \"config\")");
            KeyValues kv;
            for (const auto& [k, v] : doc.at("config").items()) kv[k] = v.get<std::string>();
            cfg.apply(kv);
            if (doc.value("command", "") == command && doc.contains("args")) {
                const json& a = doc.at("args");
                if (args.model == defaults.model) args.model = a.value("model", args.model);
                if (args.map == defaults.map) args.map = a.value("map", args.map);
                if (args.resume_state == defaults.resume_state) args.resume_state = a.value("resume_state", args.resume_state);
                if (!args.log_all) args.log_all = a.value("log_all", false);
                if (args.param == defaults.param) args.param = a.value("param", args.param);
                if (args.values == defaults.values) args.values = a.value("values", args.values);
                if (args.baseline == defaults.baseline) args.baseline = a.value("baseline", args.baseline);
                if (args.runs.empty()) args.runs = a.value("runs", std::vector<std::string>{});
            }
        } else {
            if (!fs::exists(g.config)) throw ConfigError("config file not found: " + g.config);
            cfg.apply(parse_config_file(g.config));
        }
    }
    KeyValues overrides;
    for (const auto& s : g.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        overrides[s.substr(0, eq)] = s.substr(eq + 1);
    }
    cfg.apply(overrides);
    if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
    cfg.validate();
    return cfg;
}

void write_run_json(const fs::path& out, const std::string& command, const ExperimentConfig& cfg, const json& args) {
    json kv = json::object();
    for (const auto& [k, v] : cfg.to_key_values()) kv[k] = v;
    write_json(out / "run.json", {{"command", command}, {"version", kVersion}, {"seed", cfg.seed}, {"config", kv}, {"args", args}});
}

std::shared_ptr<const ForestModel> maybe_model(const std::string& path) {
    if (path.empty()) return nullptr;
    if (!fs::exists(path)) throw ConfigError("model file not found: " + path);
    return std::make_shared<const ForestModel>(load_forest(path));
}

std::shared_ptr<const BlackSpotMap> maybe_map(const std::string& path) {
    if (path.empty()) return nullptr;
    if (!fs::exists(path)) throw ConfigError("black-spot map file not found: " + path);
    return std::make_shared<const BlackSpotMap>(load_black_spot_map(path));
}

void cmd_train_predictor(const ExperimentConfig& cfg, const fs::path& out) {
    const auto traces = load_traces(cfg);
    const auto forest = train_predictor(cfg, traces[0]);
    save_forest(*forest, out / "model.json");
    const ForestPredictor predictor(forest);
    const auto train_rec = prediction_records(predictor, traces[0]);
    const auto val_rec = prediction_records(predictor, traces[1]);
    write_json(out / "predictor_report.json", {{"train_rows", train_rec.size()},
                                               {"train_rmse", prediction_rmse(train_rec)},
                                               {"validation_rows", val_rec.size()},
                                               {"validation_rmse", prediction_rmse(val_rec)},
                                               {"oob_rmse", forest->oob_rmse}});
    write_run_json(out, "train-predictor", cfg, json::object());
}

void cmd_build_blackspots(const ExperimentConfig& cfg, const Args& args, const fs::path& out) {
    const Workbench wb = prepare(cfg, maybe_model(args.model));
    save_black_spot_map(*wb.black_spots, out / "blackspots.json");
    write_json(out / "blackspots.geojson", black_spot_map_to_geojson(*wb.black_spots, wb.validation.projection));

    std::ostringstream csv;
    csv << "cluster,x,y,size,rmse,black_spot\n";
    for (std::size_t i = 0; i < wb.clusters.size(); ++i) {
        const auto& c = wb.clusters[i];
        csv << i << ',' << json(c.centroid.x).dump() << ',' << json(c.centroid.y).dump() << ',' << c.members.size() << ','
            << json(c.rmse).dump() << ',' << (c.rmse > cfg.blackspot.rmse_max ? 1 : 0) << '\n';
    }
    write_text(out / "clusters.csv", csv.str());

    const auto runs = black_spot_statistics(wb.eval, *wb.black_spots);
    write_text(out / "blackspot_ecdf.csv", black_spot_ecdf_csv(runs));
    std::vector<double> dist;
    for (const auto& r : runs) dist.push_back(r.distance);
    write_json(out / "blackspot_report.json", {{"clusters", wb.clusters.size()},
                                               {"ellipses", wb.black_spots->ellipses().size()},
                                               {"rmse_max", wb.black_spots->threshold_used()},
                                               {"runs", runs.size()},
                                               {"median_distance", dist.empty() ? json(nullptr) : json(quantile(dist, 0.5))}});
    write_run_json(out, "build-blackspots", cfg, {{"model", args.model}});
}

void cmd_simulate(const ExperimentConfig& cfg, const Args& args, const fs::path& out) {
    const Workbench wb = prepare(cfg, maybe_model(args.model), maybe_map(args.map));
    auto scheme = make_scheme(cfg.scheme, wb);
    int first_epoch = 0;
    if (!args.resume_state.empty()) {
        const json st = read_json(args.resume_state, "state file");
        if (st.value("scheme", "") != scheme->name()) throw ConfigError("state file " + args.resume_state + " belongs to another scheme");
        scheme->load_state(st.at("state"));
        first_epoch = st.at("epochs_done").get<int>();
    }
    std::vector<Event> events;
    const int epochs = scheme->learns() ? cfg.epochs : 1;
    const auto report = run_training(wb.eval, *scheme, *wb.predictor, wb.replay, epochs, &events,
                                     args.log_all ? EventLogMode::All : EventLogMode::Last, first_epoch);

    write_text(out / "events.csv", event_log_csv(events));
    write_json(out / "training_report.json", training_report_to_json(report));
    write_text(out / "epochs.csv", epoch_series_csv(report));
    write_json(out / "state.json", {{"scheme", scheme->name()}, {"epochs_done", first_epoch + epochs}, {"state", scheme->state_json()}});

    const auto& last = report.epochs.back();
    const auto eff = efficiency(last.mean_data_rate, last.mean_aoi, wb.bandit.s_target, wb.bandit.dt_max);
    write_json(out / "summary.json", {{"scheme", cfg.scheme},
                                      {"seed", cfg.seed},
                                      {"config_fingerprint", config_fingerprint(cfg)},
                                      {"s_target", wb.bandit.s_target},
                                      {"s_max", wb.bandit.s_max},
                                      {"convergence_epoch", report.convergence_epoch},
                                      {"e_s", eff.e_s},
                                      {"e_aoi", eff.e_aoi},
                                      {"final", epoch_result_to_json(last)},
                                      {"notes", "PRBs assume the UE is granted every PRB it needs; they are a lower bound."}});
    write_run_json(out, "simulate", cfg,
                   {{"model", args.model}, {"map", args.map}, {"resume_state", args.resume_state}, {"log_all", args.log_all}});
}

void cmd_sweep(const ExperimentConfig& cfg, const Args& args, const fs::path& out) {
    const auto values = split_list(args.values);
    const auto points = run_sweep(cfg, args.param, values, maybe_model(args.model), maybe_map(args.map));
    write_text(out / "sweep.csv", sweep_csv(args.param, points));
    write_run_json(out, "sweep", cfg, {{"model", args.model}, {"map", args.map}, {"param", args.param}, {"values", args.values}});
}

void cmd_report(const ExperimentConfig& cfg, const Args& args, const fs::path& out) {
    if (args.runs.empty()) throw ConfigError("report: no run directories given");
    std::map<std::string, SchemeRuns> by_scheme;
    for (const auto& dir : args.runs) {
        const json s = read_json(fs::path(dir) / "summary.json", "run summary");
        const std::string name = s.at("scheme").get<std::string>();
        auto& entry = by_scheme[name];
        if (entry.scheme.empty()) {
            entry.scheme = name;
            entry.config_fingerprint = s.at("config_fingerprint").get<std::string>();
        } else if (entry.config_fingerprint != s.at("config_fingerprint").get<std::string>()) {
            entry.config_fingerprint = "mixed";
        }
        entry.runs.push_back(epoch_result_from_json(s.at("final")));
    }
    std::vector<SchemeRuns> ordered;
    for (const auto& name : scheme_names())
        if (auto it = by_scheme.find(name); it != by_scheme.end()) ordered.push_back(std::move(it->second));
    for (auto& [name, r] : by_scheme)
        if (!r.scheme.empty() && std::find(scheme_names().begin(), scheme_names().end(), name) == scheme_names().end())
            ordered.push_back(std::move(r));

    const auto report = comparative_report(ordered, args.baseline);
    write_json(out / "report.json", comparative_report_to_json(report));
    write_text(out / "boxplot.csv", comparative_report_csv(report));
    write_run_json(out, "report", cfg, {{"runs", args.runs}, {"baseline", args.baseline}});
}

int fail(const char* kind, const std::string& message, int code) {
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Black-spot-aware contextual bandit transmission simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kVersion);

    Globals g;
    app.add_option("--config", g.config, "TOML config or a run.json from an earlier run");
    app.add_option("--set", g.sets, "Override one config key, e.g. --set bandit.w=0.8");
    app.add_option("--seed", g.seed, "Experiment seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory");

    const Args defaults;
    Args args;
    auto* train = app.add_subcommand("train-predictor", "Fit the data-rate forest on the training trace");
    auto* build = app.add_subcommand("build-blackspots", "Cluster validation errors into a black-spot map");
    build->add_option("--model", args.model, "Forest model file (trained when omitted)");
    auto* sim = app.add_subcommand("simulate", "Replay the evaluation trace through one scheme");
    sim->add_option("--model", args.model, "Forest model file");
    sim->add_option("--map", args.map, "Black-spot map file");
    sim->add_option("--resume-state", args.resume_state, "state.json of an earlier run to continue learning from");
    sim->add_flag("--log-all", args.log_all, "Log events of every epoch, not just the last");
    auto* sweep = app.add_subcommand("sweep", "Trade-off table over one config key");
    sweep->add_option("--model", args.model, "Forest model file");
    sweep->add_option("--map", args.map, "Black-spot map file");
    sweep->add_option("--param", args.param, "Config key to sweep")->capture_default_str();
    sweep->add_option("--values", args.values, "Comma-separated grid")->capture_default_str();
    auto* rep = app.add_subcommand("report", "Compare simulate runs across schemes");
    rep->add_option("runs", args.runs, "simulate output directories");
    rep->add_option("--baseline", args.baseline, "Baseline scheme for deltas")->capture_default_str();
    for (auto* sub : {train, build, sim, sweep, rep}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("usage", e.what(), 2);
    }

    try {
        const std::string command = app.get_subcommands().front()->get_name();
        const ExperimentConfig cfg = resolve_config(g, command, args, defaults);
        const fs::path out = g.out;
        fs::create_directories(out);
        if (command == "train-predictor") cmd_train_predictor(cfg, out);
        else if (command == "build-blackspots") cmd_build_blackspots(cfg, args, out);
        else if (command == "simulate") cmd_simulate(cfg, args, out);
        else if (command == "sweep") cmd_sweep(cfg, args, out);
        else cmd_report(cfg, args, out);
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const ParseError& e) {
        return fail("parse", e.what(), 2);
    } catch (const std::exception& e) {
        return fail("runtime", e.what(), 1);
    }
    return 0;
}
