#include "cli.hpp"

#include "battkit/error.hpp"
#include "battkit/soc.hpp"
#include "battkit/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace battkit::cli {

namespace fs = std::filesystem;

namespace {

std::string require(const std::optional<std::string>& v, const char* what) {
    if (!v || v->empty()) throw UsageError(std::string("missing ") + what);
    return *v;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cli", "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cli", "cannot write " + p.string());
    out << text;
}

json read_json(const fs::path& p) {
    const json j = json::parse(read_text(p), nullptr, false);
    if (j.is_discarded()) throw SchemaError("cli", p.string() + " is not valid JSON");
    return j;
}

void log(const Globals& g, const std::string& msg) {
    if (g.verbosity > 0) std::cerr << msg << "\n";
}

json flags_capacity(const Options& o) {
    json f = json::object();
    if (o.capacity) f["ingest"]["nominal_capacity_ah"] = *o.capacity;
    return f;
}

json segment_json(const telemetry::ChargeSegment& s) {
    return {{"start_index", s.start_index()},
            {"end_index", s.end_index()},
            {"start_time", s.samples().front().timestamp},
            {"duration_s", s.duration()},
            {"throughput_ah", s.charge_throughput()},
            {"mean_c_rate", s.mean_c_rate()},
            {"mean_temperature", s.mean_temperature()}};
}

std::vector<telemetry::ChargeSegment> load_segments(const std::string& path, const json& cfg) {
    const auto samples = load_telemetry(path, cfg["ingest"]);
    return telemetry::segment_charges(samples, segment_gate_from(cfg["ingest"]));
}

// Ground-truth manifest written by `synth`.
struct Manifest {
    fs::path root;
    json body;
    double capacity = 0.0;
};

Manifest load_manifest(const std::string& dir) {
    Manifest m;
    m.root = dir;
    m.body = read_json(m.root / "truth" / "ground_truth.json");
    if (m.body.value("format", "") != "battkit.ground_truth")
        throw SchemaError("cli", "not a ground-truth manifest: " + (m.root / "truth" / "ground_truth.json").string());
    m.capacity = m.body.at("nominal_capacity_ah").get<double>();
    return m;
}

void read_truth_soc(const fs::path& p, std::vector<double>& t, std::vector<double>& z) {
    std::istringstream in(read_text(p));
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        t.push_back(std::stod(line.substr(0, comma)));
        z.push_back(std::stod(line.substr(comma + 1)));
    }
}

struct SocCharge {
    std::string id;
    std::vector<soc::LabeledRow> rows;
};

// Labelled feature rows for every charge in a synthetic data directory.
std::vector<SocCharge> soc_dataset(const Manifest& m, json cfg, const soc::WindowConfig& window,
                                   const soc::Normalization* norm) {
    cfg["ingest"]["nominal_capacity_ah"] = m.capacity;
    std::vector<SocCharge> out;
    for (const auto& c : m.body.at("charges")) {
        SocCharge sc;
        sc.id = c.at("id").get<std::string>();
        std::vector<double> t, z;
        read_truth_soc(m.root / c.at("soc_file").get<std::string>(), t, z);
        for (const auto& seg : load_segments((m.root / c.at("file").get<std::string>()).string(), cfg)) {
            const auto feats = soc::build_features(seg, window, norm);
            auto rows = soc::label_rows(feats, t, z);
            sc.rows.insert(sc.rows.end(), rows.begin(), rows.end());
        }
        out.push_back(std::move(sc));
    }
    return out;
}

json eval_json(const soc::EvalReport& r) {
    return {{"rmse", r.rmse}, {"max_abs_error", r.max_abs_error}, {"within_5", r.within_5}, {"count", r.count}};
}

} // namespace

// ---------------------------------------------------------------------------

int run_ingest(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, flags_capacity(o));
    telemetry::RejectReport rejects;
    telemetry::CleanReport cleaning;
    const auto samples = load_telemetry(input, cfg["ingest"], &rejects, &cleaning);
    const auto segments = telemetry::segment_charges(samples, segment_gate_from(cfg["ingest"]));

    fs::create_directories(out);
    telemetry::write_file((out / "clean.csv").string(), samples);
    std::ostringstream rj;
    telemetry::write_rejects(rj, rejects);
    write_text(out / "rejects.txt", rj.str());

    json segs = json::array();
    for (const auto& s : segments) segs.push_back(segment_json(s));
    json res{{"rows_kept", samples.size()},
             {"rejected", rejects.by_reason},
             {"cleaning",
              {{"flagged_current", cleaning.flagged_current},
               {"flagged_pack_voltage", cleaning.flagged_pack_voltage},
               {"flagged_cell_voltage", cleaning.flagged_cell_voltage},
               {"flagged_temperature", cleaning.flagged_temperature},
               {"removed_all_invalid", cleaning.removed_all_invalid},
               {"removed_duplicate_timestamp", cleaning.removed_duplicate_timestamp},
               {"removed_out_of_order", cleaning.removed_out_of_order}}},
             {"segments", segs}};
    write_report(out, "ingest", cfg, g.seed, res);
    log(g, "ingest: " + std::to_string(samples.size()) + " rows, " + std::to_string(segments.size()) + " segments");
    return kExitOk;
}

int run_synth(const Globals& g, const Options&) {
    const auto scenario_path = require(g.input, "--scenario");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, json::object());
    json scenario = read_json(scenario_path);
    if (!scenario.is_object()) throw SchemaError("synthcell", "scenario must be a JSON object");
    if (g.seed_given) scenario["seed"] = g.seed;
    const std::uint64_t seed = scenario.value("seed", std::uint64_t{1});
    const auto files = synth::emit_fleet(scenario.dump(), out.string());
    json res{{"scenario", scenario}, {"files", files}};
    write_report(out, "synth", cfg, seed, res);
    log(g, "synth: wrote " + std::to_string(files.size()) + " files");
    return kExitOk;
}

int run_soc_train(const Globals& g, const Options& o) {
    const auto data = require(o.data ? o.data : g.input, "--data");
    const fs::path out = require(g.out, "--out");
    json flags = json::object();
    if (o.epochs) flags["soc"]["max_epochs"] = *o.epochs;
    json cfg = resolve_config(g.config, flags);
    const auto m = load_manifest(data);
    const auto lm = lm_from(cfg["soc"], g.seed, m.capacity);
    const auto charges = soc_dataset(m, cfg, lm.window, nullptr);
    std::vector<soc::LabeledRow> rows;
    for (const auto& c : charges) rows.insert(rows.end(), c.rows.begin(), c.rows.end());
    log(g, "soc train: " + std::to_string(rows.size()) + " rows from " + std::to_string(charges.size()) + " charges");

    auto [net, report] = soc::train(rows, split_from(cfg["soc"], g.seed), lm);
    fs::create_directories(out);
    soc::save_network(net, (out / "network.json").string());
    std::vector<double> step(report.loss_history.size());
    for (std::size_t i = 0; i < step.size(); ++i) step[i] = static_cast<double>(i);
    write_columns(out / "loss.txt", "accepted_step sse", step, report.loss_history);

    json res{{"rows", rows.size()},
             {"charges", charges.size()},
             {"train", eval_json(report.train)},
             {"validation", eval_json(report.validation)},
             {"test", eval_json(report.test)},
             {"epochs", report.epochs},
             {"final_damping", report.final_damping},
             {"stop_reason", report.stop_reason},
             {"small_dataset_warning", report.small_dataset_warning},
             {"nominal_capacity_ah", m.capacity}};
    write_report(out, "soc train", cfg, g.seed, res);
    return kExitOk;
}

int run_soc_eval(const Globals& g, const Options& o) {
    const auto data = require(o.data ? o.data : g.input, "--data");
    const auto model = require(o.model, "--model");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, json::object());
    const auto net = soc::load_network(model);
    const auto m = load_manifest(data);
    const auto charges = soc_dataset(m, cfg, net.window, nullptr);

    std::vector<soc::LabeledRow> all;
    json per = json::array();
    for (const auto& c : charges) {
        if (c.rows.empty()) continue;
        std::vector<double> t, z;
        for (const auto& r : c.rows) {
            t.push_back(r.timestamp);
            z.push_back(soc::predict(net, r.features, r.timestamp).soc);
        }
        write_columns(out / "traces" / (c.id + ".soc.txt"), "timestamp soc_percent", t, z);
        per.push_back({{"id", c.id}, {"report", eval_json(soc::evaluate(net, c.rows))}});
        all.insert(all.end(), c.rows.begin(), c.rows.end());
    }
    json res{{"overall", eval_json(soc::evaluate(net, all))}, {"charges", per}};
    write_report(out, "soc eval", cfg, g.seed, res);
    return kExitOk;
}

int run_soc_predict(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const auto model = require(o.model, "--model");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, flags_capacity(o));
    const auto net = soc::load_network(model);
    const double limit = cfg["soc"]["rate_limit_per_s"].get<double>();
    std::vector<double> t, z;
    json segs = json::array();
    for (const auto& seg : load_segments(input, cfg)) {
        std::optional<soc::SocEstimate> prev;
        std::size_t n = 0;
        for (const auto& row : soc::build_features(seg, net.window)) {
            auto est = soc::predict(net, row.values, row.timestamp);
            if (prev && limit > 0.0) est = soc::rate_limit(*prev, est, limit);
            prev = est;
            t.push_back(est.timestamp);
            z.push_back(est.soc);
            ++n;
        }
        json s = segment_json(seg);
        s["estimates"] = n;
        if (prev) s["final_soc"] = prev->soc;
        segs.push_back(s);
    }
    write_columns(out / "soc.txt", "timestamp soc_percent", t, z);
    write_report(out, "soc predict", cfg, g.seed, {{"segments", segs}, {"estimates", t.size()}});
    return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

json gate_json(const soh::GateDecision& d) {
    return {{"accepted", d.accepted},
            {"reason", d.reason},
            {"mean_c_rate", d.mean_c_rate},
            {"charge_fraction", d.charge_fraction},
            {"mean_temperature", d.mean_temperature}};
}

json features_json(const soh::DvaFeatureSet& f) {
    json peaks = json::array();
    for (const auto& p : f.peaks)
        peaks.push_back({{"curve", soh::to_string(p.curve)}, {"q", p.q}, {"v", p.v}, {"height", p.height},
                         {"prominence", p.prominence}});
    return {{"peaks", peaks}, {"values", f.values}, {"mean_temperature", f.mean_temperature},
            {"mean_c_rate", f.mean_c_rate}};
}

} // namespace

int run_soh_gate(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, flags_capacity(o));
    json segs = json::array();
    for (const auto& seg : load_segments(input, cfg)) {
        json s = segment_json(seg);
        s["gate"] = gate_json(soh::gate_segment(seg, soh_gate_from(cfg["soh"])));
        segs.push_back(s);
    }
    write_report(out, "soh gate", cfg, g.seed, {{"segments", segs}});
    return kExitOk;
}

int run_soh_curves(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, flags_capacity(o));
    const auto segments = load_segments(input, cfg);
    if (segments.empty()) throw InsufficientDataError("sohdva", "no charging segment in " + input);
    json segs = json::array();
    for (std::size_t k = 0; k < segments.size(); ++k) {
        const auto curves = soh::differential_curves(segments[k], diff_from(cfg["soh"]));
        std::vector<double> q, dv, v, ic;
        for (std::size_t j = 0; j < curves.size(); ++j) {
            if (!curves.dv_mask[j]) {
                q.push_back(curves.q_axis[j]);
                dv.push_back(curves.dv[j]);
            }
            if (!curves.ic_mask[j]) {
                v.push_back(curves.v_axis[j]);
                ic.push_back(curves.ic[j]);
            }
        }
        const std::string stem = "segment" + std::to_string(k);
        write_columns(out / (stem + ".dv.txt"), "charge_ah dv_v_per_ah", q, dv);
        write_columns(out / (stem + ".ic.txt"), "voltage_v ic_ah_per_v", v, ic);
        json s = segment_json(segments[k]);
        s["bins"] = curves.size();
        s["cc_charge_ah"] = curves.cc_charge_ah;
        s["integrated_ic_ah"] = soh::integrate_ic(curves);
        s["smoothing"] = {{"window", curves.smoothing.window}, {"order", curves.smoothing.order},
                          {"bin_ah", curves.smoothing.bin_ah}};
        try {
            s["features"] = features_json(soh::extract_features(curves, features_from(cfg["soh"])));
        } catch (const FeatureMissingError& e) {
            s["features_error"] = e.what();
        }
        segs.push_back(s);
    }
    write_report(out, "soh curves", cfg, g.seed, {{"segments", segs}});
    return kExitOk;
}

int run_soh_calibrate(const Globals& g, const Options& o) {
    const auto data = require(o.data ? o.data : g.input, "--data");
    const fs::path out = require(g.out, "--out");
    json cfg = resolve_config(g.config, json::object());
    const auto m = load_manifest(data);
    json seg_cfg = cfg;
    seg_cfg["ingest"]["nominal_capacity_ah"] = m.capacity;
    const auto fc = features_from(cfg["soh"]);

    std::vector<soh::CalibrationSample> samples;
    json skipped = json::array();
    for (const auto& c : m.body.at("charges")) {
        const auto id = c.at("id").get<std::string>();
        const auto segs = load_segments((m.root / c.at("file").get<std::string>()).string(), seg_cfg);
        if (segs.empty()) {
            skipped.push_back({{"id", id}, {"reason", "no charging segment"}});
            continue;
        }
        const auto& seg = *std::max_element(segs.begin(), segs.end(), [](const auto& a, const auto& b) {
            return a.charge_throughput() < b.charge_throughput();
        });
        const auto gate = soh::gate_segment(seg, soh_gate_from(cfg["soh"]));
        if (!gate.accepted) {
            skipped.push_back({{"id", id}, {"reason", gate.reason}});
            continue;
        }
        try {
            const auto curves = soh::differential_curves(seg, diff_from(cfg["soh"]));
            samples.push_back({soh::extract_features(curves, fc), c.at("true_soh").get<double>(),
                               c.at("temperature").get<double>()});
        } catch (const Error& e) {
            skipped.push_back({{"id", id}, {"reason", e.what()}});
        }
    }
    const auto lut = soh::build_lut(samples, fc, lut_config_from(cfg["soh"]));
    fs::create_directories(out);
    soh::save_lut(lut, (out / "lut.txt").string());
    json rows = json::array();
    for (const auto& r : lut.rows)
        rows.push_back({{"feature", r.feature}, {"temperature", r.temperature}, {"slope", r.slope},
                        {"intercept", r.intercept}, {"r2", r.r2}, {"count", r.count}});
    write_report(out, "soh calibrate", cfg, g.seed,
                 {{"samples", samples.size()}, {"rows", rows}, {"excluded", lut.excluded}, {"skipped", skipped}});
    return kExitOk;
}

int run_soh_estimate(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const auto lut_path = require(o.lut, "--lut");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, flags_capacity(o));
    const auto lut = soh::load_lut(lut_path);
    const auto segments = load_segments(input, cfg);
    if (segments.empty()) throw InsufficientDataError("sohdva", "no charging segment in " + input);

    json segs = json::array();
    std::size_t estimated = 0;
    std::string first_reason;
    for (const auto& seg : segments) {
        json s = segment_json(seg);
        const auto gate = soh::gate_segment(seg, soh_gate_from(cfg["soh"]));
        s["gate"] = gate_json(gate);
        if (!gate.accepted) {
            s["status"] = "gated";
            if (first_reason.empty()) first_reason = gate.reason;
            segs.push_back(s);
            continue;
        }
        const auto curves = soh::differential_curves(seg, diff_from(cfg["soh"]));
        const auto feats = soh::extract_features(curves, lut.features);
        const auto est = soh::estimate_soh(feats, lut, estimate_from(cfg["soh"]));
        json contrib = json::array();
        for (const auto& c : est.contributions)
            contrib.push_back({{"feature", c.feature}, {"value", c.value}, {"soh", c.soh}, {"variance", c.variance},
                               {"weight", c.weight}, {"extrapolated", c.extrapolated}});
        s["status"] = "estimated";
        s["soh_c"] = est.soh_c;
        s["confidence"] = soh::to_string(est.confidence);
        s["contributions"] = contrib;
        s["features"] = features_json(feats);
        segs.push_back(s);
        ++estimated;
    }
    const std::string status = estimated > 0 ? "estimated" : "gated";
    write_report(out, "soh estimate", cfg, g.seed, {{"status", status}, {"segments", segs}});
    if (estimated == 0) throw GatedError("gated: " + first_reason);
    return kExitOk;
}

// ---------------------------------------------------------------------------

namespace {

struct WatchState {
    thermal::ShapeClusterState state;
    double last_origin = -1e300;
    bool has_last = false;
};

constexpr const char* kWatchFormat = "battkit.thermal_watch";

WatchState load_watch(const fs::path& p) {
    WatchState w;
    if (!fs::exists(p)) return w;
    const json j = read_json(p);
    if (j.value("format", "") != kWatchFormat) throw SchemaError("thermalwatch", p.string() + " is not a watch state");
    w.state = thermal::state_from_json(j.at("state").dump());
    if (!j.at("last_origin").is_null()) {
        w.last_origin = j.at("last_origin").get<double>();
        w.has_last = true;
    }
    return w;
}

void save_watch(const fs::path& p, const WatchState& w) {
    json j{{"format", kWatchFormat},
           {"version", 1},
           {"last_origin", w.has_last ? json(w.last_origin) : json(nullptr)},
           {"state", json::parse(thermal::state_to_json(w.state))}};
    write_text(p, j.dump(1) + "\n");
}

struct ThermalRun {
    std::string verdicts;
    std::vector<double> t, triggered, delta;
    json triggers = json::array();
    std::size_t batches = 0;
};

// Runs detection over the batches newer than `w.last_origin`.
ThermalRun run_detection(const std::string& input, const json& cfg, const Globals& g, WatchState& w) {
    const auto& tc = cfg["thermal"];
    const auto samples = load_telemetry(input, cfg["ingest"]);
    telemetry::WindowConfig wc;
    wc.dt = tc["dt"].get<double>();
    const auto windows = telemetry::window_signals(samples, telemetry::SensorSelector{}, tc["window_len"].get<std::size_t>(),
                                                   tc["stride"].get<std::size_t>(), wc);
    const auto th = thresholds_from(tc, g.seed);
    ThermalRun run;
    for (const auto& batch : thermal::batches_by_origin(windows)) {
        const double origin = batch.front().origin_timestamp;
        if (w.has_last && origin <= w.last_origin) continue;
        auto res = thermal::detect(batch, w.state, th);
        w.state = std::move(res.state);
        w.last_origin = origin;
        w.has_last = true;
        const auto& v = res.verdict;
        run.verdicts += thermal::verdict_to_json(v) + "\n";
        double dmax = 0.0;
        for (const auto& e : v.evidence) dmax = std::max(dmax, e.delta);
        run.t.push_back(v.window_end);
        run.triggered.push_back(v.triggered ? 1.0 : 0.0);
        run.delta.push_back(dmax);
        if (v.triggered)
            run.triggers.push_back({{"window_end", v.window_end},
                                    {"criterion", thermal::to_string(v.criterion)},
                                    {"isolated", thermal::isolate(v, w.state)}});
        ++run.batches;
    }
    return run;
}

json thermal_results(const ThermalRun& run) {
    json r{{"batches", run.batches}, {"triggers", run.triggers.size()}, {"trigger_list", run.triggers}};
    r["first_trigger"] = run.triggers.empty() ? json(nullptr) : run.triggers.front();
    return r;
}

} // namespace

int run_thermal_replay(const Globals& g, const Options&) {
    const auto input = require(g.input, "--input");
    const fs::path out = require(g.out, "--out");
    const json cfg = resolve_config(g.config, json::object());
    WatchState w;
    const auto run = run_detection(input, cfg, g, w);
    write_text(out / "verdicts.jsonl", run.verdicts);
    write_columns(out / "timeline.txt", "window_end triggered", run.t, run.triggered);
    write_columns(out / "fitting_error.txt", "window_end max_fitting_error_rise", run.t, run.delta);
    save_watch(out / "state.json", w);
    write_report(out, "thermal replay", cfg, g.seed, thermal_results(run));
    return kExitOk;
}

int run_thermal_watch(const Globals& g, const Options& o) {
    const auto input = require(g.input, "--input");
    const fs::path out = require(g.out, "--out");
    const fs::path state_path = o.state ? fs::path(*o.state) : out / "state.json";
    const json cfg = resolve_config(g.config, json::object());
    auto w = load_watch(state_path);
    const auto run = run_detection(input, cfg, g, w);
    fs::create_directories(out);
    {
        std::ofstream app(out / "verdicts.jsonl", std::ios::binary | std::ios::app);
        if (!app) throw IoError("cli", "cannot append to verdicts.jsonl");
        app << run.verdicts;
    }
    save_watch(state_path, w);
    write_report(out, "thermal watch", cfg, g.seed, thermal_results(run));
    return kExitOk;
}

// ---------------------------------------------------------------------------

int run_report(const Globals& g, const Options& o) {
    const fs::path in = require(g.input, "--input");
    const fs::path out = g.out ? fs::path(*g.out) : in;
    const json cfg = resolve_config(g.config, json::object());
    std::vector<fs::path> reports;
    for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && e.path().filename() == "report.json") reports.push_back(e.path());
    std::sort(reports.begin(), reports.end());
    json list = json::array();
    for (const auto& p : reports) {
        const json r = read_json(p);
        if (r.value("format", "") != kReportFormat) continue;
        list.push_back({{"path", fs::relative(p, in).generic_string()},
                        {"command", r.value("command", "")},
                        {"seed", r.value("seed", std::uint64_t{0})},
                        {"results", r.value("results", json::object())}});
    }
    json res{{"reports", list}};
    if (o.svg) {
        json svgs = json::array();
        for (const auto& p : render_svgs(in)) svgs.push_back(fs::relative(p, in).generic_string());
        res["svg"] = svgs;
    }
    write_report(out, "report", cfg, g.seed, res, "summary.json");
    return kExitOk;
}

} // namespace battkit::cli
