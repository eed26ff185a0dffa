#pragma once

#include "battkit/network.hpp"
#include "battkit/soh.hpp"
#include "battkit/telemetry.hpp"
#include "battkit/thermal.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace battkit::cli {

using json = nlohmann::json;

/// Bad flags or an unusable config file. Exit status 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A segment refused by the SOH gate. Exit status 3.
class GatedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitModuleError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitGated = 3;

inline constexpr const char* kReportFormat = "battkit.report";
inline constexpr int kReportVersion = 1;

/// Every tunable of every command, with defaults.
json default_config();

/// defaults <- config file <- flag overrides. Keys not present in the
/// defaults are rejected.
json resolve_config(const std::optional<std::string>& config_path, const json& flag_overrides);

telemetry::SchemaConfig schema_from(const json& ingest);
telemetry::LimitsConfig limits_from(const json& ingest);
telemetry::GateConfig segment_gate_from(const json& ingest);

soc::LmConfig lm_from(const json& soc, std::uint64_t seed, double capacity_ah);
soc::SplitConfig split_from(const json& soc, std::uint64_t seed);

soh::GateConfig soh_gate_from(const json& soh);
soh::DiffConfig diff_from(const json& soh);
soh::FeatureConfig features_from(const json& soh);
soh::LutConfig lut_config_from(const json& soh);
soh::EstimateConfig estimate_from(const json& soh);

thermal::Thresholds thresholds_from(const json& th, std::uint64_t seed);

/// Options shared by all commands.
struct Globals {
    std::optional<std::string> input;
    std::optional<std::string> config;
    std::optional<std::string> out;
    std::uint64_t seed = 1;
    bool seed_given = false;
    int verbosity = 0;
};

/// Ingest + clean one telemetry file with the resolved ingest settings.
std::vector<telemetry::TelemetrySample> load_telemetry(const std::string& path, const json& ingest,
                                                       telemetry::RejectReport* rejects = nullptr,
                                                       telemetry::CleanReport* cleaning = nullptr);

/// Writes `<dir>/<name>` with the command name, resolved config, seed and
/// results. Returns the path.
std::filesystem::path write_report(const std::filesystem::path& dir, const std::string& command, const json& config,
                                   std::uint64_t seed, const json& results, const std::string& name = "report.json");

/// Two whitespace-separated columns, one row per point, shortest round-trip
/// number formatting.
void write_columns(const std::filesystem::path& path, const std::string& header, const std::vector<double>& x,
                   const std::vector<double>& y);

std::string format_number(double v);

/// Renders every two-column data file under `dir` as a line plot.
std::vector<std::filesystem::path> render_svgs(const std::filesystem::path& dir);

/// Command-specific options collected by the argument parser.
struct Options {
    std::optional<std::string> data;
    std::optional<std::string> model;
    std::optional<std::string> lut;
    std::optional<std::string> state;
    std::optional<double> capacity;
    std::optional<std::size_t> epochs;
    bool svg = false;
};

int run_ingest(const Globals& g, const Options& o);
int run_synth(const Globals& g, const Options& o);
int run_soc_train(const Globals& g, const Options& o);
int run_soc_eval(const Globals& g, const Options& o);
int run_soc_predict(const Globals& g, const Options& o);
int run_soh_gate(const Globals& g, const Options& o);
int run_soh_curves(const Globals& g, const Options& o);
int run_soh_calibrate(const Globals& g, const Options& o);
int run_soh_estimate(const Globals& g, const Options& o);
int run_thermal_watch(const Globals& g, const Options& o);
int run_thermal_replay(const Globals& g, const Options& o);
int run_report(const Globals& g, const Options& o);

} // namespace battkit::cli
