#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace battkit::telemetry {

/// Per-field validity bits of one telemetry row.
struct QualityFlags {
    bool current = true;
    bool pack_voltage = true;
    std::vector<bool> cells;
    std::vector<bool> temperatures;

    bool all_invalid() const;
    bool all_valid() const;
    bool operator==(const QualityFlags&) const = default;
};

/// One timestamped measurement row. Current is positive while charging.
struct TelemetrySample {
    double timestamp = 0.0;  // seconds since epoch
    double pack_current = 0.0;
    double pack_voltage = 0.0;
    std::vector<double> cell_voltages;
    std::vector<double> temperatures;  // degC
    QualityFlags flags;

    /// Builds a sample with every field flagged valid.
    static TelemetrySample make(double t, double current, double pack_voltage,
                                std::vector<double> cells, std::vector<double> temps);

    std::optional<double> current() const;
    /// Mean over valid cell voltages.
    std::optional<double> mean_cell_voltage() const;
    /// Mean over valid temperature sensors.
    std::optional<double> mean_temperature() const;
    std::optional<double> temperature(std::size_t sensor) const;

    bool operator==(const TelemetrySample&) const = default;
};

/// Trapezoidal integral of the valid pack current, in ampere-hours.
double charge_throughput_ah(std::span<const TelemetrySample> samples);

/// A contiguous charging event.
class ChargeSegment {
public:
    ChargeSegment() = default;
    /// Validates the charging invariants (non-negative valid current, strictly
    /// increasing timestamps) and derives the metadata. Throws DomainError.
    ChargeSegment(std::vector<TelemetrySample> samples, double nominal_capacity_ah,
                  std::size_t start_index = 0, std::optional<std::size_t> end_index = std::nullopt);

    const std::vector<TelemetrySample>& samples() const { return samples_; }
    double charge_throughput() const { return throughput_ah_; }
    double mean_c_rate() const { return mean_c_rate_; }
    double mean_temperature() const { return mean_temperature_; }
    double nominal_capacity() const { return nominal_capacity_ah_; }
    std::size_t start_index() const { return start_index_; }
    /// Inclusive index of the last sample in the source sequence.
    std::size_t end_index() const { return end_index_; }
    double duration() const;

private:
    std::vector<TelemetrySample> samples_;
    double throughput_ah_ = 0.0;
    double mean_c_rate_ = 0.0;
    double mean_temperature_ = 0.0;
    double nominal_capacity_ah_ = 0.0;
    std::size_t start_index_ = 0;
    std::size_t end_index_ = 0;
};

/// A fixed-length slice of one sensor on a uniform time grid.
struct SignalWindow {
    int sensor_id = 0;
    std::vector<double> values;
    double dt = 1.0;
    double origin_timestamp = 0.0;
    bool is_static = false;

    double end_timestamp() const {
        return origin_timestamp + dt * static_cast<double>(values.size() - 1);
    }
};

// ---------------------------------------------------------------------------
// Ingestion
// ---------------------------------------------------------------------------

enum class FileFormat { delimited, json_lines };
enum class TimeFormat { epoch, iso8601 };

/// Maps header column names to measurement roles. Cell voltage and
/// temperature columns are discovered by prefix followed by an index
/// (`cell_v0`, `cell_v1`, `temp0`, ...).
struct SchemaConfig {
    FileFormat format = FileFormat::delimited;
    char delimiter = ',';
    TimeFormat time_format = TimeFormat::epoch;
    std::string timestamp_column = "timestamp";
    std::string current_column = "pack_current";
    std::string pack_voltage_column = "pack_voltage";
    std::string cell_voltage_prefix = "cell_v";
    std::string temperature_prefix = "temp";
    /// Set when the source logs discharge as positive current; ingestion
    /// flips the sign so charging is positive downstream.
    bool discharge_positive = false;
};

/// Counts per reject reason.
struct RejectReport {
    std::map<std::string, std::size_t> by_reason;

    void add(const std::string& reason, std::size_t n = 1) { by_reason[reason] += n; }
    std::size_t total() const;
};

struct IngestResult {
    std::vector<TelemetrySample> samples;
    RejectReport rejects;
    std::size_t cell_count = 0;
    std::size_t sensor_count = 0;
};

IngestResult ingest(std::istream& in, const SchemaConfig& schema = {});
IngestResult ingest_file(const std::string& path, const SchemaConfig& schema = {});

/// Writes samples in the format described by `schema`. Invalid fields are
/// written as empty cells (delimited) or null (json lines). Numbers use the
/// shortest representation that round-trips exactly.
void write(std::ostream& out, std::span<const TelemetrySample> samples,
           const SchemaConfig& schema = {});
void write_file(const std::string& path, std::span<const TelemetrySample> samples,
                const SchemaConfig& schema = {});

void write_rejects(std::ostream& out, const RejectReport& report);

/// Parses `YYYY-MM-DDTHH:MM:SS[.fff][Z|+HH:MM]` into epoch seconds.
std::optional<double> parse_iso8601(const std::string& text);
std::string format_iso8601(double epoch_seconds);

// ---------------------------------------------------------------------------
// Cleaning
// ---------------------------------------------------------------------------

struct LimitsConfig {
    double cell_voltage_min = 2.0;
    double cell_voltage_max = 4.5;
    /// Pack voltage bounds; when unset they scale the cell bounds by the
    /// cell count of the row.
    std::optional<double> pack_voltage_min;
    std::optional<double> pack_voltage_max;
    double temperature_min = -40.0;
    double temperature_max = 85.0;
    double current_abs_max = 1000.0;
};

struct CleanReport {
    std::size_t flagged_current = 0;
    std::size_t flagged_pack_voltage = 0;
    std::size_t flagged_cell_voltage = 0;
    std::size_t flagged_temperature = 0;
    std::size_t removed_all_invalid = 0;
    std::size_t removed_duplicate_timestamp = 0;
    std::size_t removed_out_of_order = 0;
};

struct CleanResult {
    std::vector<TelemetrySample> samples;
    CleanReport report;
};

CleanResult clean(std::span<const TelemetrySample> samples, const LimitsConfig& limits = {});

// ---------------------------------------------------------------------------
// Charge segmentation
// ---------------------------------------------------------------------------

struct GateConfig {
    double nominal_capacity_ah = 1.0;
    /// Charging opens when current exceeds this C-rate ...
    double start_c_rate = 0.02;
    /// ... for at least this long.
    double min_dwell_s = 60.0;
    /// A pause (or a hole in the timestamps) longer than this closes a segment.
    double max_gap_s = 300.0;
    double min_duration_s = 0.0;
    double min_throughput_ah = 0.0;
};

std::vector<ChargeSegment> segment_charges(std::span<const TelemetrySample> samples,
                                           const GateConfig& gate);

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

enum class SignalKind { temperature, cell_voltage, pack_current, pack_voltage };

struct SensorSelector {
    SignalKind kind = SignalKind::temperature;
    /// Channel indices; empty selects every channel of that kind.
    std::vector<int> channels;
};

struct WindowConfig {
    double dt = 60.0;
    /// Peak-to-peak below this marks a window static.
    double static_peak_to_peak = 1e-9;
};

/// Linear interpolation of (t, v) onto t0, t0+dt, ... <= t_end. `t` must be
/// strictly increasing.
std::vector<double> resample_uniform(std::span<const double> t, std::span<const double> v,
                                     double t0, double dt, std::size_t count);

std::vector<SignalWindow> window_signals(std::span<const TelemetrySample> samples,
                                         const SensorSelector& selector,
                                         std::size_t window_len, std::size_t stride,
                                         const WindowConfig& config = {});

} // namespace battkit::telemetry
