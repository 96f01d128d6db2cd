#include "bscb/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "bscb/error.hpp"
#include "text_util.hpp"

namespace bscb {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double standard_normal(std::uint64_t seed, std::uint64_t key) {
    // Box-Muller over two counter-based draws; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform_draw(seed, key, 0);
    const double u2 = uniform_draw(seed, key, 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double mbit(double bytes) { return bytes * 8.0 / 1.0e6; }

}  // namespace

void ChannelRealizationModel::validate() const {
    if (!(residual_sigma >= 0.0) || !std::isfinite(residual_sigma)) throw ConfigError("channel: residual_sigma must be >= 0");
    if (!(payload_saturation >= 0.0)) throw ConfigError("channel: payload_saturation must be >= 0");
    if (!(min_rate > 0.0)) throw ConfigError("channel: min_rate must be > 0");
}

double payload_factor(double buffer_bytes, const ChannelRealizationModel& model) {
    if (buffer_bytes <= 0.0) return 0.0;
    return buffer_bytes / (buffer_bytes + model.payload_saturation);
}

Realization realize_transmission(const ContextSnapshot& s, double predicted, double buffer_bytes,
                                 const ChannelRealizationModel& model, std::uint64_t draw_key) {
    if (!(buffer_bytes > 0.0)) throw ConfigError("realize_transmission: buffer is empty");
    model.validate();
    const double base = s.measured_rate ? *s.measured_rate : predicted;
    const double residual = model.residual_sigma == 0.0 ? 1.0 : std::exp(model.residual_sigma * standard_normal(model.seed, draw_key));
    Realization r;
    r.achieved_rate = std::max(model.min_rate, std::max(base, 0.0) * residual * payload_factor(buffer_bytes, model));
    r.duration = mbit(buffer_bytes) / r.achieved_rate;
    return r;
}

nlohmann::json epoch_result_to_json(const EpochResult& r) {
    return {{"mean_data_rate", r.mean_data_rate},
            {"mean_aoi", r.mean_aoi},
            {"max_aoi", r.max_aoi},
            {"total_prbs", r.total_prbs},
            {"total_energy", r.total_energy},
            {"tx_count", r.tx_count},
            {"forced_tx_count", r.forced_tx_count},
            {"deadline_violations", r.deadline_violations},
            {"blackspot_tx_count", r.blackspot_tx_count},
            {"bytes_generated", r.bytes_generated},
            {"bytes_sent", r.bytes_sent},
            {"tx_time", r.tx_time}};
}

EpochResult epoch_result_from_json(const nlohmann::json& doc) {
    EpochResult r;
    r.mean_data_rate = doc.at("mean_data_rate").get<double>();
    r.mean_aoi = doc.at("mean_aoi").get<double>();
    r.max_aoi = doc.at("max_aoi").get<double>();
    r.total_prbs = doc.at("total_prbs").get<std::int64_t>();
    r.total_energy = doc.at("total_energy").get<double>();
    r.tx_count = doc.at("tx_count").get<int>();
    r.forced_tx_count = doc.value("forced_tx_count", 0);
    r.deadline_violations = doc.value("deadline_violations", 0);
    r.blackspot_tx_count = doc.value("blackspot_tx_count", 0);
    r.bytes_generated = doc.value("bytes_generated", 0.0);
    r.bytes_sent = doc.value("bytes_sent", 0.0);
    r.tx_time = doc.value("tx_time", 0.0);
    return r;
}

const char* to_string(EventAction a) {
    switch (a) {
        case EventAction::Idle: return "IDLE";
        case EventAction::Tx: return "TX";
        case EventAction::Flush: return "FLUSH";
    }
    return "?";
}

std::string event_log_csv(const std::vector<Event>& events) {
    using detail::format_double;
    std::ostringstream out;
    out << "epoch,t,action,predicted,achieved,buffer_bytes,aoi,in_blackspot,reward\n";
    for (const auto& e : events) {
        out << e.epoch + 1 << ',' << format_double(e.t) << ',' << to_string(e.action) << ',' << format_double(e.predicted) << ','
            << format_double(e.achieved) << ',' << format_double(e.buffer_bytes) << ',' << format_double(e.aoi) << ','
            << (e.in_blackspot ? 1 : 0) << ',' << (std::isnan(e.reward) ? std::string() : format_double(e.reward)) << '\n';
    }
    return out.str();
}

std::vector<TransmissionRecord> transmissions(const std::vector<Event>& events) {
    std::vector<TransmissionRecord> out;
    for (const auto& e : events)
        if (e.action != EventAction::Idle) out.push_back({e.buffer_bytes, e.cqi, e.rsrp, e.duration});
    return out;
}

void ReplayConfig::validate() const {
    if (!(source_rate > 0.0)) throw ConfigError("replay: source_rate must be > 0");
    if (!(dt_max > 0.0)) throw ConfigError("replay: dt_max must be > 0");
    if (!table) throw ConfigError("replay: resource table missing");
    if (resources.bandwidth_prbs < 1 || resources.bandwidth_prbs > table->max_prb())
        throw ConfigError("replay: bandwidth_prbs outside the resource table");
    channel.validate();
    power.validate();
}

namespace {

// Shared by replay_epoch and summarize_events so both agree to the last bit.
struct Accumulator {
    double bits = 0.0;
    double aoi_sum = 0.0;
    EpochResult r;

    void add_tx(const TransmissionRecord& tx, double aoi, const ReplayConfig& cfg) {
        r.tx_count += 1;
        r.bytes_sent += tx.bytes;
        r.tx_time += tx.duration;
        r.total_prbs += resource_occupation(tx, *cfg.table, cfg.resources);
        r.total_energy += energy(tx, cfg.power);
        bits += mbit(tx.bytes);
        aoi_sum += aoi;
    }

    EpochResult finish(double span, const ReplayConfig& cfg) {
        r.mean_data_rate = r.tx_time > 0.0 ? bits / r.tx_time : 0.0;
        r.mean_aoi = r.tx_count > 0 ? aoi_sum / r.tx_count : 0.0;
        r.total_energy += cfg.power.idle_power_w * std::max(0.0, span - r.tx_time);
        return r;
    }
};

}  // namespace

EpochResult replay_epoch(const DriveTrace& trace, Scheme& scheme, const RatePredictor& predictor, const ReplayConfig& cfg,
                         int epoch, std::vector<Event>* events) {
    cfg.validate();
    const auto& snaps = trace.snapshots;
    if (snaps.size() < 2) throw ConfigError("replay: trace needs at least two snapshots");

    scheme.begin_epoch(epoch);
    Accumulator acc;
    BufferState buffer{0.0, 0.0, snaps.front().timestamp};

    for (std::size_t i = 1; i < snaps.size(); ++i) {
        const auto& s = snaps[i];
        const double now = s.timestamp;
        const double added = cfg.source_rate * (now - snaps[i - 1].timestamp);
        buffer.buffered_bytes += added;
        acc.r.bytes_generated += added;
        buffer.first_item_age = now - buffer.last_tx_time;
        const bool last = i + 1 == snaps.size();

        const double age = buffer.first_item_age;
        acc.r.max_aoi = std::max(acc.r.max_aoi, age);
        if (age > cfg.dt_max) acc.r.deadline_violations += 1;
        const bool inside = cfg.black_spots && cfg.black_spots->contains(s.position);

        ContextSnapshot query = s;
        query.payload_size = buffer.buffered_bytes;
        const double predicted = predictor.predict(query);

        const StepInput in{s, now, predicted, buffer};
        const SchemeDecision decision = scheme.decide(in);

        Event ev;
        ev.epoch = epoch;
        ev.t = now;
        ev.predicted = predicted;
        ev.buffer_bytes = buffer.buffered_bytes;
        ev.aoi = age;
        ev.in_blackspot = inside;
        ev.forced = decision.forced_by_deadline;
        ev.cqi = s.cqi;
        ev.rsrp = s.rsrp;

        StepOutcome outcome;
        outcome.final_step = last;
        const std::uint64_t key = (static_cast<std::uint64_t>(epoch) << 32) | static_cast<std::uint64_t>(i);
        if (decision.action == Arm::Tx) {
            const auto real = realize_transmission(s, predicted, buffer.buffered_bytes, cfg.channel, key);
            outcome.transmitted = true;
            outcome.achieved_rate = real.achieved_rate;
            ev.action = EventAction::Tx;
            ev.achieved = real.achieved_rate;
            ev.duration = real.duration;
            acc.add_tx({buffer.buffered_bytes, s.cqi, s.rsrp, real.duration}, age, cfg);
            if (decision.forced_by_deadline) acc.r.forced_tx_count += 1;
            else if (inside) acc.r.blackspot_tx_count += 1;
            buffer.buffered_bytes = 0.0;
            buffer.last_tx_time = now;
        } else {
            ev.action = EventAction::Idle;
        }
        ev.reward = scheme.learn(in, decision, outcome);
        if (events) events->push_back(ev);

        if (last && buffer.buffered_bytes > 0.0) {
            const auto real = realize_transmission(s, predicted, buffer.buffered_bytes, cfg.channel, key);
            Event flush = ev;
            flush.action = EventAction::Flush;
            flush.achieved = real.achieved_rate;
            flush.duration = real.duration;
            flush.reward = kNaN;
            flush.forced = false;
            acc.add_tx({buffer.buffered_bytes, s.cqi, s.rsrp, real.duration}, age, cfg);
            buffer.buffered_bytes = 0.0;
            buffer.last_tx_time = now;
            if (events) events->push_back(flush);
        }
    }
    scheme.end_epoch();
    return acc.finish(trace.span(), cfg);
}

EpochResult summarize_events(const std::vector<Event>& events, const ReplayConfig& cfg, double span, double bytes_generated) {
    Accumulator acc;
    acc.r.bytes_generated = bytes_generated;
    for (const auto& e : events) {
        acc.r.max_aoi = std::max(acc.r.max_aoi, e.aoi);
        if (e.action != EventAction::Flush && e.aoi > cfg.dt_max) acc.r.deadline_violations += 1;
        if (e.action == EventAction::Idle) continue;
        acc.add_tx({e.buffer_bytes, e.cqi, e.rsrp, e.duration}, e.aoi, cfg);
        if (e.forced) acc.r.forced_tx_count += 1;
        else if (e.in_blackspot && e.action == EventAction::Tx) acc.r.blackspot_tx_count += 1;
    }
    return acc.finish(span, cfg);
}

std::vector<double> moving_average(const std::vector<double>& values, int window) {
    if (window < 1) throw ConfigError("moving_average: window must be >= 1");
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        sum += values[i];
        if (i >= static_cast<std::size_t>(window)) sum -= values[i - window];
        out[i] = sum / static_cast<double>(std::min<std::size_t>(i + 1, window));
    }
    return out;
}

int convergence_epoch(const std::vector<double>& values, int window, double fraction) {
    if (values.empty()) throw ConfigError("convergence_epoch: no values");
    const auto ma = moving_average(values, window);
    const double target = fraction * ma.back();
    for (std::size_t i = 0; i < ma.size(); ++i)
        if (ma[i] >= target) return static_cast<int>(i + 1);
    return static_cast<int>(ma.size());
}

std::vector<double> TrainingReport::moving_average() const {
    std::vector<double> rates;
    for (const auto& e : epochs) rates.push_back(e.mean_data_rate);
    return bscb::moving_average(rates, window);
}

TrainingReport run_training(const DriveTrace& trace, Scheme& scheme, const RatePredictor& predictor, const ReplayConfig& cfg,
                            int epochs, std::vector<Event>* events, EventLogMode log_mode, int first_epoch) {
    if (epochs < 1) throw ConfigError("run_training: epochs must be >= 1");
    TrainingReport report;
    report.window = kConvergenceWindow;
    std::vector<double> rates;
    for (int e = 0; e < epochs; ++e) {
        const bool log = events && (log_mode == EventLogMode::All || (log_mode == EventLogMode::Last && e + 1 == epochs));
        report.epochs.push_back(replay_epoch(trace, scheme, predictor, cfg, first_epoch + e, log ? events : nullptr));
        rates.push_back(report.epochs.back().mean_data_rate);
    }
    report.convergence_epoch = convergence_epoch(rates, report.window);
    return report;
}

nlohmann::json training_report_to_json(const TrainingReport& report) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : report.epochs) epochs.push_back(epoch_result_to_json(e));
    return {{"window", report.window},
            {"convergence_epoch", report.convergence_epoch},
            {"moving_average_data_rate", report.moving_average()},
            {"epochs", epochs}};
}

std::string epoch_series_csv(const TrainingReport& report) {
    using detail::format_double;
    const auto ma = report.moving_average();
    std::ostringstream out;
    out << "epoch,mean_data_rate,moving_average,mean_aoi,max_aoi,total_prbs,total_energy,tx_count\n";
    for (std::size_t i = 0; i < report.epochs.size(); ++i) {
        const auto& e = report.epochs[i];
        out << i + 1 << ',' << format_double(e.mean_data_rate) << ',' << format_double(ma[i]) << ',' << format_double(e.mean_aoi) << ','
            << format_double(e.max_aoi) << ',' << e.total_prbs << ',' << format_double(e.total_energy) << ',' << e.tx_count << '\n';
    }
    return out.str();
}

ComparativeReport comparative_report(const std::vector<SchemeRuns>& runs, const std::string& baseline) {
    if (runs.size() < 2) throw ConfigError("comparative_report: at least two schemes are required");
    ComparativeReport report;
    report.baseline = baseline;

    std::set<std::string> fingerprints;
    for (const auto& r : runs) {
        if (r.runs.empty()) throw ConfigError("comparative_report: scheme '" + r.scheme + "' has no runs");
        fingerprints.insert(r.config_fingerprint);
    }
    if (fingerprints.size() > 1) report.warnings.push_back("runs were produced with mismatched configurations");

    auto column = [](const SchemeRuns& r, auto field) {
        std::vector<double> v;
        for (const auto& e : r.runs) v.push_back(static_cast<double>(field(e)));
        return v;
    };
    auto rate = [](const EpochResult& e) { return e.mean_data_rate; };
    auto prbs = [](const EpochResult& e) { return e.total_prbs; };
    auto joules = [](const EpochResult& e) { return e.total_energy; };
    auto aoi = [](const EpochResult& e) { return e.mean_aoi; };

    for (const auto& r : runs) {
        SchemeSummary s;
        s.scheme = r.scheme;
        s.data_rate = quartiles(column(r, rate));
        s.prbs = quartiles(column(r, prbs));
        s.energy = quartiles(column(r, joules));
        s.aoi = quartiles(column(r, aoi));
        report.schemes.push_back(s);
    }

    const auto base = std::find_if(report.schemes.begin(), report.schemes.end(), [&](const auto& s) { return s.scheme == baseline; });
    if (base == report.schemes.end()) {
        report.warnings.push_back("baseline scheme '" + baseline + "' missing; deltas left at zero");
        return report;
    }
    const SchemeSummary b = *base;
    auto delta = [](double v, double ref) { return ref == 0.0 ? 0.0 : v / ref - 1.0; };
    for (auto& s : report.schemes) {
        s.delta_data_rate = delta(s.data_rate.mean, b.data_rate.mean);
        s.delta_prbs = delta(s.prbs.mean, b.prbs.mean);
        s.delta_energy = delta(s.energy.mean, b.energy.mean);
        s.delta_aoi = delta(s.aoi.mean, b.aoi.mean);
    }
    return report;
}

namespace {

nlohmann::json quartiles_json(const Quartiles& q) {
    return {{"min", q.min}, {"q1", q.q1}, {"median", q.median}, {"q3", q.q3}, {"max", q.max}, {"mean", q.mean}, {"count", q.count}};
}

}  // namespace

nlohmann::json comparative_report_to_json(const ComparativeReport& report) {
    nlohmann::json schemes = nlohmann::json::array();
    for (const auto& s : report.schemes) {
        schemes.push_back({{"scheme", s.scheme},
                           {"data_rate", quartiles_json(s.data_rate)},
                           {"prbs", quartiles_json(s.prbs)},
                           {"energy", quartiles_json(s.energy)},
                           {"aoi", quartiles_json(s.aoi)},
                           {"delta_vs_baseline",
                            {{"data_rate", s.delta_data_rate}, {"prbs", s.delta_prbs}, {"energy", s.delta_energy}, {"aoi", s.delta_aoi}}}});
    }
    return {{"baseline", report.baseline},
            {"schemes", schemes},
            {"warnings", report.warnings},
            {"notes",
             {"channel outcomes use a log-normal residual plus payload saturation in place of learned derivation models",
              "occupied PRBs assume the device always receives the resources it needs (lower bound)"}}};
}

std::string comparative_report_csv(const ComparativeReport& report) {
    using detail::format_double;
    std::ostringstream out;
    out << "scheme,metric,min,q1,median,q3,max,mean,count\n";
    for (const auto& s : report.schemes) {
        const std::pair<const char*, const Quartiles*> rows[] = {
            {"data_rate", &s.data_rate}, {"prbs", &s.prbs}, {"energy", &s.energy}, {"aoi", &s.aoi}};
        for (const auto& [metric, q] : rows) {
            out << s.scheme << ',' << metric << ',' << format_double(q->min) << ',' << format_double(q->q1) << ','
                << format_double(q->median) << ',' << format_double(q->q3) << ',' << format_double(q->max) << ','
                << format_double(q->mean) << ',' << q->count << '\n';
        }
    }
    return out.str();
}

}  // namespace bscb
