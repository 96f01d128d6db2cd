// Python bindings for the core operations. Structured results cross the boundary as JSON text;
// the Python package decodes them.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bscb/error.hpp"
#include "bscb/experiment.hpp"

namespace py = pybind11;
using namespace bscb;

namespace {

ExperimentConfig make_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
    ExperimentConfig cfg;
    if (!path.empty()) cfg.apply(parse_config_file(path));
    cfg.apply(KeyValues(overrides.begin(), overrides.end()));
    cfg.validate();
    return cfg;
}

std::string simulate(const std::string& path, const std::map<std::string, std::string>& overrides) {
    const auto cfg = make_config(path, overrides);
    const auto wb = prepare(cfg);
    auto scheme = make_scheme(cfg.scheme, wb);
    py::gil_scoped_release release;
    const auto report = run_training(wb.eval, *scheme, *wb.predictor, wb.replay, scheme->learns() ? cfg.epochs : 1, nullptr,
                                     EventLogMode::None);
    const auto& last = report.epochs.back();
    const auto eff = efficiency(last.mean_data_rate, last.mean_aoi, wb.bandit.s_target, wb.bandit.dt_max);
    nlohmann::json doc = training_report_to_json(report);
    doc["scheme"] = cfg.scheme;
    doc["s_target"] = wb.bandit.s_target;
    doc["s_max"] = wb.bandit.s_max;
    doc["e_s"] = eff.e_s;
    doc["e_aoi"] = eff.e_aoi;
    doc["black_spots"] = wb.black_spots->ellipses().size();
    return doc.dump();
}

std::string sweep(const std::string& path, const std::map<std::string, std::string>& overrides, const std::string& key,
                  const std::vector<std::string>& values) {
    const auto cfg = make_config(path, overrides);
    const auto points = run_sweep(cfg, key, values);
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : points)
        rows.push_back({{"value", p.value}, {"e_s", p.e_s}, {"e_aoi", p.e_aoi}, {"mean_rate", p.mean_rate}, {"mean_aoi", p.mean_aoi},
                        {"convergence_epoch", p.convergence_epoch}});
    return rows.dump();
}

std::string black_spot_map(const std::string& path, const std::map<std::string, std::string>& overrides) {
    const auto wb = prepare(make_config(path, overrides));
    nlohmann::json doc = black_spot_map_to_json(*wb.black_spots);
    std::vector<double> distances;
    for (const auto& r : black_spot_statistics(wb.eval, *wb.black_spots)) distances.push_back(r.distance);
    doc["run_distances"] = distances;
    return doc.dump();
}

BanditConfig bandit_config(double s_target, double s_max, double dt_max, double w, double delta, double omega, bool intercept) {
    BanditConfig c;
    c.s_target = s_target;
    c.s_max = s_max;
    c.dt_max = dt_max;
    c.w = w;
    c.delta = delta;
    c.omega_punish = omega;
    c.intercept = intercept;
    c.validate();
    return c;
}

}  // namespace

PYBIND11_MODULE(_bscb, m) {
    m.doc() = "Black-spot-aware contextual bandit transmission simulator";
    m.attr("__version__") = kVersion;

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ParseError>(m, "ParseError", PyExc_RuntimeError);

    m.def("alpha_from_delta", &alpha_from_delta, py::arg("delta"));
    m.def(
        "reward_tx",
        [](double rate, double age, double s_target, double s_max, double dt_max, double w) {
            return reward_tx(rate, age, bandit_config(s_target, s_max, dt_max, w, 0.1, -1.0, true));
        },
        py::arg("rate"), py::arg("buffer_age"), py::arg("s_target") = 20.0, py::arg("s_max") = 30.0, py::arg("dt_max") = 120.0,
        py::arg("w") = 0.9);
    m.def(
        "reward_idle",
        [](double age, double dt_max, double omega) { return reward_idle(age, bandit_config(20, 30, dt_max, 0.9, 0.1, omega, true)); },
        py::arg("buffer_age"), py::arg("dt_max") = 120.0, py::arg("omega") = -1.0);

    py::class_<LinUcbBandit>(m, "LinUcbBandit")
        .def(py::init([](double s_target, double s_max, double dt_max, double w, double delta, bool intercept) {
                 return LinUcbBandit(bandit_config(s_target, s_max, dt_max, w, delta, -1.0, intercept));
             }),
             py::arg("s_target") = 20.0, py::arg("s_max") = 30.0, py::arg("dt_max") = 120.0, py::arg("w") = 0.9, py::arg("delta") = 0.1,
             py::arg("intercept") = true)
        .def(
            "select", [](const LinUcbBandit& b, double rate, double age) { return to_string(b.select({rate, age})); }, py::arg("rate"),
            py::arg("buffer_age"))
        .def(
            "update",
            [](LinUcbBandit& b, const std::string& arm, double rate, double age, double reward) {
                if (arm != "TX" && arm != "IDLE") throw ConfigError("arm must be TX or IDLE, got '" + arm + "'");
                b.update(arm == "TX" ? Arm::Tx : Arm::Idle, {rate, age}, reward);
            },
            py::arg("arm"), py::arg("rate"), py::arg("buffer_age"), py::arg("reward"))
        .def("theta",
             [](const LinUcbBandit& b, const std::string& arm) {
                 const auto& t = b.state(arm == "TX" ? Arm::Tx : Arm::Idle).theta;
                 return std::vector<double>(t.begin(), t.end());
             })
        .def("to_json", [](const LinUcbBandit& b) { return bandit_to_json(b).dump(); });

    m.def(
        "point_in_ellipse",
        [](double x, double y, double cx, double cy, double a, double b, double rotation) {
            return point_in_ellipse({x, y}, {{cx, cy}, a, b, rotation, 0.0});
        },
        py::arg("x"), py::arg("y"), py::arg("cx"), py::arg("cy"), py::arg("semi_major"), py::arg("semi_minor"), py::arg("rotation"));
    m.def(
        "kmeans",
        [](const std::vector<std::pair<double, double>>& pts, std::size_t k, std::uint64_t seed) {
            std::vector<Point2> p;
            for (const auto& [x, y] : pts) p.push_back({x, y});
            const auto r = kmeans(p, k, seed);
            std::vector<std::pair<double, double>> centroids;
            for (const auto& c : r.clusters) centroids.emplace_back(c.centroid.x, c.centroid.y);
            return py::make_tuple(r.assignment, centroids, r.inertia_trace);
        },
        py::arg("points"), py::arg("k"), py::arg("seed") = 1);
    m.def(
        "cqi_to_tbs", [](int cqi, int prbs) { return cqi_to_tbs(cqi, prbs, ResourceLookupTable{}); }, py::arg("cqi"), py::arg("prbs"));

    m.def("parse_config", [](const std::string& text) { return parse_config_text(text); }, py::arg("text"));
    m.def("_simulate", &simulate);
    m.def("_sweep", &sweep);
    m.def("_black_spot_map", &black_spot_map);
}
