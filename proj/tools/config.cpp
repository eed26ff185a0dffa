#include "cli.hpp"

#include "battkit/error.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace battkit::cli {

namespace fs = std::filesystem;

json default_config() {
    const telemetry::SchemaConfig schema;
    const telemetry::LimitsConfig limits;
    const telemetry::GateConfig seg;
    const soc::WindowConfig win;
    const soc::LmConfig lm;
    const soc::SplitConfig split;
    const soc::FullChargeRule full;
    const soh::GateConfig sg;
    const soh::DiffConfig diff;
    const auto feat = soh::FeatureConfig::defaults();
    const soh::LutConfig lut;
    const soh::EstimateConfig est;
    const thermal::Thresholds th;

    json c;
    c["ingest"] = {
        {"format", "csv"},
        {"delimiter", std::string(1, schema.delimiter)},
        {"time_format", "epoch"},
        {"discharge_positive", schema.discharge_positive},
        {"nominal_capacity_ah", 3.0},
        {"limits",
         {{"cell_voltage_min", limits.cell_voltage_min},
          {"cell_voltage_max", limits.cell_voltage_max},
          {"temperature_min", limits.temperature_min},
          {"temperature_max", limits.temperature_max},
          {"current_abs_max", limits.current_abs_max}}},
        {"segments",
         {{"start_c_rate", seg.start_c_rate},
          {"min_dwell_s", seg.min_dwell_s},
          {"max_gap_s", seg.max_gap_s},
          {"min_duration_s", seg.min_duration_s},
          {"min_throughput_ah", seg.min_throughput_ah}}},
    };
    c["soc"] = {
        {"window", {{"dt_s", win.dt_s}, {"history", win.history}, {"downsample_s", win.downsample_s}}},
        {"hidden", lm.hidden},
        {"hidden_activation", soc::to_string(lm.hidden_activation)},
        {"damping_initial", lm.damping_initial},
        {"damping_max", lm.damping_max},
        {"max_epochs", lm.max_epochs},
        {"patience", lm.patience},
        {"split", {{"train", split.train}, {"validation", split.validation}, {"test", split.test}}},
        {"full_charge", {{"enabled", true}, {"cell_voltage", full.cell_voltage}, {"taper_c_rate", full.taper_c_rate}}},
        {"rate_limit_per_s", 0.0},
    };
    c["soh"] = {
        {"gate",
         {{"max_c_rate", sg.max_c_rate},
          {"c_rate_tolerance", sg.c_rate_tolerance},
          {"min_charge_fraction", sg.min_charge_fraction}}},
        {"curves",
         {{"bin_ah", diff.bin_ah},
          {"sg_window", diff.sg_window},
          {"sg_order", diff.sg_order},
          {"epsilon", diff.epsilon},
          {"cv_tolerance_v", diff.cv_tolerance_v},
          {"min_bins", diff.min_bins}}},
        {"features",
         {{"dv_min_prominence", feat.dv_min_prominence},
          {"ic_min_prominence", feat.ic_min_prominence},
          {"min_separation", feat.min_separation},
          {"voltage_min", feat.voltage_min},
          {"voltage_max", feat.voltage_max}}},
        {"lut",
         {{"r2_threshold", lut.r2_threshold}, {"min_levels", lut.min_levels}, {"temperature_step", lut.temperature_step}}},
        {"estimate", {{"variance_floor", est.variance_floor}, {"ceiling", est.ceiling}}},
    };
    c["thermal"] = {
        {"window_len", 60},
        {"stride", 15},
        {"dt", 60.0},
        {"k", th.k},
        {"restarts", th.restarts},
        {"max_iterations", th.max_iterations},
        {"sep_min", th.sep_min},
        {"smooth_window", th.smooth_window},
        {"smooth_order", th.smooth_order},
        {"static_p2p", th.static_p2p},
        {"lone_active_p2p", th.lone_active_p2p},
        {"lone_active_ratio", th.lone_active_ratio},
        {"rise_factor", th.rise_factor},
        {"rise_abs", th.rise_abs},
        {"rise_min_p2p", th.rise_min_p2p},
        {"trailing", th.trailing},
        {"min_history", th.min_history},
        {"warmup", th.warmup},
        {"evaluate_both", th.evaluate_both},
    };
    return c;
}

namespace {

// Overlays `patch` on `base`, refusing keys the base does not know.
void overlay(json& base, const json& patch, const std::string& where) {
    if (!patch.is_object()) throw UsageError("config section '" + where + "' must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key())) throw UsageError("unknown config key '" + path + "'");
        auto& slot = base[it.key()];
        if (slot.is_object()) {
            overlay(slot, it.value(), path);
        } else {
            const bool numeric = slot.is_number() && it.value().is_number();
            if (!numeric && slot.type() != it.value().type())
                throw UsageError("config key '" + path + "' has the wrong type");
            slot = it.value();
        }
    }
}

template <class T>
T get(const json& j, const char* key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw UsageError(std::string("config key '") + key + "': " + e.what());
    }
}

} // namespace

json resolve_config(const std::optional<std::string>& config_path, const json& flag_overrides) {
    json c = default_config();
    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw UsageError("cannot read config file '" + *config_path + "'");
        const json file = json::parse(in, nullptr, false);
        if (file.is_discarded()) throw UsageError("config file '" + *config_path + "' is not valid JSON");
        overlay(c, file, "");
    }
    if (!flag_overrides.is_null()) overlay(c, flag_overrides, "");
    return c;
}

telemetry::SchemaConfig schema_from(const json& ing) {
    telemetry::SchemaConfig s;
    const auto format = get<std::string>(ing, "format");
    if (format == "csv") s.format = telemetry::FileFormat::delimited;
    else if (format == "jsonl") s.format = telemetry::FileFormat::json_lines;
    else throw UsageError("ingest.format must be 'csv' or 'jsonl'");
    const auto delim = get<std::string>(ing, "delimiter");
    if (delim.size() != 1) throw UsageError("ingest.delimiter must be one character");
    s.delimiter = delim[0];
    const auto tf = get<std::string>(ing, "time_format");
    if (tf == "epoch") s.time_format = telemetry::TimeFormat::epoch;
    else if (tf == "iso8601") s.time_format = telemetry::TimeFormat::iso8601;
    else throw UsageError("ingest.time_format must be 'epoch' or 'iso8601'");
    s.discharge_positive = get<bool>(ing, "discharge_positive");
    return s;
}

telemetry::LimitsConfig limits_from(const json& ing) {
    const auto& l = ing.at("limits");
    telemetry::LimitsConfig c;
    c.cell_voltage_min = get<double>(l, "cell_voltage_min");
    c.cell_voltage_max = get<double>(l, "cell_voltage_max");
    c.temperature_min = get<double>(l, "temperature_min");
    c.temperature_max = get<double>(l, "temperature_max");
    c.current_abs_max = get<double>(l, "current_abs_max");
    return c;
}

telemetry::GateConfig segment_gate_from(const json& ing) {
    const auto& s = ing.at("segments");
    telemetry::GateConfig g;
    g.nominal_capacity_ah = get<double>(ing, "nominal_capacity_ah");
    g.start_c_rate = get<double>(s, "start_c_rate");
    g.min_dwell_s = get<double>(s, "min_dwell_s");
    g.max_gap_s = get<double>(s, "max_gap_s");
    g.min_duration_s = get<double>(s, "min_duration_s");
    g.min_throughput_ah = get<double>(s, "min_throughput_ah");
    return g;
}

soc::LmConfig lm_from(const json& s, std::uint64_t seed, double capacity_ah) {
    soc::LmConfig lm;
    const auto& w = s.at("window");
    lm.window.dt_s = get<double>(w, "dt_s");
    lm.window.history = get<std::size_t>(w, "history");
    lm.window.downsample_s = get<double>(w, "downsample_s");
    lm.hidden = get<std::vector<std::size_t>>(s, "hidden");
    try {
        lm.hidden_activation = soc::activation_from_string(get<std::string>(s, "hidden_activation"));
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
    lm.damping_initial = get<double>(s, "damping_initial");
    lm.damping_max = get<double>(s, "damping_max");
    lm.max_epochs = get<std::size_t>(s, "max_epochs");
    lm.patience = get<std::size_t>(s, "patience");
    lm.seed = seed;
    const auto& f = s.at("full_charge");
    if (get<bool>(f, "enabled"))
        lm.full_charge = soc::FullChargeRule{get<double>(f, "cell_voltage"), get<double>(f, "taper_c_rate"), capacity_ah};
    return lm;
}

soc::SplitConfig split_from(const json& s, std::uint64_t seed) {
    const auto& sp = s.at("split");
    return {get<double>(sp, "train"), get<double>(sp, "validation"), get<double>(sp, "test"), seed};
}

soh::GateConfig soh_gate_from(const json& s) {
    const auto& g = s.at("gate");
    soh::GateConfig c;
    c.max_c_rate = get<double>(g, "max_c_rate");
    c.c_rate_tolerance = get<double>(g, "c_rate_tolerance");
    c.min_charge_fraction = get<double>(g, "min_charge_fraction");
    return c;
}

soh::DiffConfig diff_from(const json& s) {
    const auto& d = s.at("curves");
    soh::DiffConfig c;
    c.bin_ah = get<double>(d, "bin_ah");
    c.sg_window = get<std::size_t>(d, "sg_window");
    c.sg_order = get<std::size_t>(d, "sg_order");
    c.epsilon = get<double>(d, "epsilon");
    c.cv_tolerance_v = get<double>(d, "cv_tolerance_v");
    c.min_bins = get<std::size_t>(d, "min_bins");
    return c;
}

soh::FeatureConfig features_from(const json& s) {
    const auto& f = s.at("features");
    auto c = soh::FeatureConfig::defaults();
    c.dv_min_prominence = get<double>(f, "dv_min_prominence");
    c.ic_min_prominence = get<double>(f, "ic_min_prominence");
    c.min_separation = get<std::size_t>(f, "min_separation");
    c.voltage_min = get<double>(f, "voltage_min");
    c.voltage_max = get<double>(f, "voltage_max");
    return c;
}

soh::LutConfig lut_config_from(const json& s) {
    const auto& l = s.at("lut");
    return {get<double>(l, "r2_threshold"), get<std::size_t>(l, "min_levels"), get<double>(l, "temperature_step")};
}

soh::EstimateConfig estimate_from(const json& s) {
    soh::EstimateConfig c;
    const auto g = soh_gate_from(s);
    c.max_c_rate = g.max_c_rate;
    c.c_rate_tolerance = g.c_rate_tolerance;
    c.variance_floor = get<double>(s.at("estimate"), "variance_floor");
    c.ceiling = get<double>(s.at("estimate"), "ceiling");
    return c;
}

thermal::Thresholds thresholds_from(const json& t, std::uint64_t seed) {
    thermal::Thresholds th;
    th.k = get<std::size_t>(t, "k");
    th.restarts = get<std::size_t>(t, "restarts");
    th.max_iterations = get<std::size_t>(t, "max_iterations");
    th.seed = seed;
    th.sep_min = get<double>(t, "sep_min");
    th.smooth_window = get<std::size_t>(t, "smooth_window");
    th.smooth_order = get<std::size_t>(t, "smooth_order");
    th.static_p2p = get<double>(t, "static_p2p");
    th.lone_active_p2p = get<double>(t, "lone_active_p2p");
    th.lone_active_ratio = get<double>(t, "lone_active_ratio");
    th.rise_factor = get<double>(t, "rise_factor");
    th.rise_abs = get<double>(t, "rise_abs");
    th.rise_min_p2p = get<double>(t, "rise_min_p2p");
    th.trailing = get<std::size_t>(t, "trailing");
    th.min_history = get<std::size_t>(t, "min_history");
    th.warmup = get<std::size_t>(t, "warmup");
    th.evaluate_both = get<bool>(t, "evaluate_both");
    return th;
}

std::vector<telemetry::TelemetrySample> load_telemetry(const std::string& path, const json& ingest,
                                                       telemetry::RejectReport* rejects,
                                                       telemetry::CleanReport* cleaning) {
    auto res = telemetry::ingest_file(path, schema_from(ingest));
    if (rejects) *rejects = res.rejects;
    auto cleaned = telemetry::clean(res.samples, limits_from(ingest));
    if (cleaning) *cleaning = cleaned.report;
    return std::move(cleaned.samples);
}

std::string format_number(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

fs::path write_report(const fs::path& dir, const std::string& command, const json& config, std::uint64_t seed,
                      const json& results, const std::string& name) {
    try {
        fs::create_directories(dir);
    } catch (const fs::filesystem_error& e) {
        throw IoError("cli", std::string("cannot create output directory: ") + e.what());
    }
    json r;
    r["format"] = kReportFormat;
    r["version"] = kReportVersion;
    r["command"] = command;
    r["seed"] = seed;
    r["config"] = config;
    r["results"] = results;
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli", "cannot write " + path.string());
    out << r.dump(2) << "\n";
    return path;
}

void write_columns(const fs::path& path, const std::string& header, const std::vector<double>& x,
                   const std::vector<double>& y) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cli", "cannot write " + path.string());
    out << "# " << header << "\n";
    for (std::size_t i = 0; i < x.size() && i < y.size(); ++i)
        out << format_number(x[i]) << ' ' << format_number(y[i]) << '\n';
}

} // namespace battkit::cli
