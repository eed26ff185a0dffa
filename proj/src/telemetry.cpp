#include "battkit/telemetry.hpp"

#include "battkit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

namespace battkit::telemetry {

namespace {

constexpr const char* kModule = "telemetry";
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

enum class FieldParse { ok, empty, bad };

FieldParse parse_double(std::string_view s, double& value) {
    if (s.empty()) return FieldParse::empty;
    if (s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size()) return FieldParse::bad;
    return FieldParse::ok;
}

void append_number(std::string& out, double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

/// Returns the index encoded after `prefix`, or -1 when `name` is not
/// prefix followed by digits only.
int indexed_column(std::string_view name, std::string_view prefix) {
    if (name.size() <= prefix.size() || name.substr(0, prefix.size()) != prefix) return -1;
    auto digits = name.substr(prefix.size());
    int idx = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), idx);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || idx < 0) return -1;
    return idx;
}

std::optional<double> parse_timestamp(std::string_view field, TimeFormat fmt) {
    if (fmt == TimeFormat::iso8601) return parse_iso8601(std::string(field));
    double v = 0.0;
    if (parse_double(field, v) != FieldParse::ok || !std::isfinite(v)) return std::nullopt;
    return v;
}

void set_field(double& slot, bool& flag, double parsed, FieldParse status) {
    if (status == FieldParse::ok && std::isfinite(parsed)) {
        slot = parsed;
        flag = true;
    } else {
        slot = kNaN;
        flag = false;
    }
}

IngestResult ingest_delimited(std::istream& in, const SchemaConfig& schema) {
    std::string line;
    std::string header;
    while (std::getline(in, header)) {
        if (!trim(header).empty()) break;
    }
    if (trim(header).empty()) throw EmptyInputError(kModule, "input has no header row");

    auto names = split(header, schema.delimiter);
    int ts_col = -1, cur_col = -1, pv_col = -1;
    std::vector<std::pair<int, int>> cell_cols, temp_cols;  // (index, column)
    for (int c = 0; c < static_cast<int>(names.size()); ++c) {
        auto n = names[c];
        if (n == schema.timestamp_column) ts_col = c;
        else if (n == schema.current_column) cur_col = c;
        else if (n == schema.pack_voltage_column) pv_col = c;
        else if (int i = indexed_column(n, schema.cell_voltage_prefix); i >= 0) cell_cols.emplace_back(i, c);
        else if (int j = indexed_column(n, schema.temperature_prefix); j >= 0) temp_cols.emplace_back(j, c);
    }
    std::string missing;
    if (ts_col < 0) missing += " " + schema.timestamp_column;
    if (cur_col < 0) missing += " " + schema.current_column;
    if (pv_col < 0) missing += " " + schema.pack_voltage_column;
    if (!missing.empty()) throw SchemaError(kModule, "missing mandatory column(s):" + missing);
    std::sort(cell_cols.begin(), cell_cols.end());
    std::sort(temp_cols.begin(), temp_cols.end());

    IngestResult result;
    result.cell_count = cell_cols.size();
    result.sensor_count = temp_cols.size();
    const double sign = schema.discharge_positive ? -1.0 : 1.0;

    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split(line, schema.delimiter);
        if (fields.size() != names.size()) {
            result.rejects.add("field_count");
            continue;
        }
        auto ts = parse_timestamp(fields[ts_col], schema.time_format);
        if (!ts) {
            result.rejects.add("bad_timestamp");
            continue;
        }
        TelemetrySample s;
        s.timestamp = *ts;
        s.cell_voltages.resize(cell_cols.size());
        s.temperatures.resize(temp_cols.size());
        s.flags.cells.resize(cell_cols.size());
        s.flags.temperatures.resize(temp_cols.size());

        bool bad = false;
        auto read = [&](int col, double& slot, bool& flag) {
            double v = 0.0;
            auto st = parse_double(fields[col], v);
            if (st == FieldParse::bad) bad = true;
            set_field(slot, flag, v, st);
        };
        read(cur_col, s.pack_current, s.flags.current);
        if (s.flags.current) s.pack_current *= sign;
        read(pv_col, s.pack_voltage, s.flags.pack_voltage);
        for (std::size_t k = 0; k < cell_cols.size(); ++k) {
            bool f = false;
            read(cell_cols[k].second, s.cell_voltages[k], f);
            s.flags.cells[k] = f;
        }
        for (std::size_t k = 0; k < temp_cols.size(); ++k) {
            bool f = false;
            read(temp_cols[k].second, s.temperatures[k], f);
            s.flags.temperatures[k] = f;
        }
        if (bad) {
            result.rejects.add("parse_error");
            continue;
        }
        result.samples.push_back(std::move(s));
    }
    return result;
}

IngestResult ingest_json_lines(std::istream& in, const SchemaConfig& schema) {
    IngestResult result;
    std::optional<std::size_t> cells, temps;
    const double sign = schema.discharge_positive ? -1.0 : 1.0;
    std::string line;
    std::size_t missing_field = 0;
    std::size_t rows = 0;

    auto scalar = [](const nlohmann::json& j, double& slot, bool& flag) -> bool {
        if (j.is_null()) {
            slot = kNaN;
            flag = false;
            return true;
        }
        if (!j.is_number()) return false;
        slot = j.get<double>();
        flag = std::isfinite(slot);
        if (!flag) slot = kNaN;
        return true;
    };

    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++rows;
        nlohmann::json rec = nlohmann::json::parse(line, nullptr, false);
        if (rec.is_discarded() || !rec.is_object()) {
            result.rejects.add("parse_error");
            continue;
        }
        if (!rec.contains(schema.timestamp_column) || !rec.contains(schema.current_column) ||
            !rec.contains(schema.pack_voltage_column)) {
            result.rejects.add("missing_field");
            ++missing_field;
            continue;
        }
        const auto& tsj = rec[schema.timestamp_column];
        std::optional<double> ts;
        if (schema.time_format == TimeFormat::iso8601 && tsj.is_string()) {
            ts = parse_iso8601(tsj.get<std::string>());
        } else if (schema.time_format == TimeFormat::epoch && tsj.is_number()) {
            double v = tsj.get<double>();
            if (std::isfinite(v)) ts = v;
        }
        if (!ts) {
            result.rejects.add("bad_timestamp");
            continue;
        }
        TelemetrySample s;
        s.timestamp = *ts;
        bool ok = scalar(rec[schema.current_column], s.pack_current, s.flags.current) &&
                  scalar(rec[schema.pack_voltage_column], s.pack_voltage, s.flags.pack_voltage);
        if (s.flags.current) s.pack_current *= sign;

        auto array = [&](const char* key, std::vector<double>& vals, std::vector<bool>& flags,
                         std::optional<std::size_t>& expected) {
            nlohmann::json arr = rec.contains(key) ? rec[key] : nlohmann::json::array();
            if (!arr.is_array()) return false;
            if (!expected) expected = arr.size();
            if (arr.size() != *expected) return false;
            vals.resize(arr.size());
            flags.resize(arr.size());
            for (std::size_t k = 0; k < arr.size(); ++k) {
                bool f = false;
                if (!scalar(arr[k], vals[k], f)) return false;
                flags[k] = f;
            }
            return true;
        };
        ok = ok && array("cell_voltages", s.cell_voltages, s.flags.cells, cells) &&
             array("temperatures", s.temperatures, s.flags.temperatures, temps);
        if (!ok) {
            result.rejects.add("parse_error");
            continue;
        }
        result.samples.push_back(std::move(s));
    }
    if (rows > 0 && missing_field == rows) {
        throw SchemaError(kModule, "no record carries the mandatory fields " + schema.timestamp_column +
                                       ", " + schema.current_column + ", " + schema.pack_voltage_column);
    }
    result.cell_count = cells.value_or(0);
    result.sensor_count = temps.value_or(0);
    return result;
}

} // namespace

// ---------------------------------------------------------------------------

bool QualityFlags::all_invalid() const {
    auto none = [](const std::vector<bool>& v) { return std::none_of(v.begin(), v.end(), [](bool b) { return b; }); };
    return !current && !pack_voltage && none(cells) && none(temperatures);
}

bool QualityFlags::all_valid() const {
    auto all = [](const std::vector<bool>& v) { return std::all_of(v.begin(), v.end(), [](bool b) { return b; }); };
    return current && pack_voltage && all(cells) && all(temperatures);
}

TelemetrySample TelemetrySample::make(double t, double current, double pack_voltage,
                                      std::vector<double> cells, std::vector<double> temps) {
    TelemetrySample s;
    s.timestamp = t;
    s.pack_current = current;
    s.pack_voltage = pack_voltage;
    s.flags.cells.assign(cells.size(), true);
    s.flags.temperatures.assign(temps.size(), true);
    s.cell_voltages = std::move(cells);
    s.temperatures = std::move(temps);
    return s;
}

std::optional<double> TelemetrySample::current() const {
    if (!flags.current) return std::nullopt;
    return pack_current;
}

std::optional<double> TelemetrySample::mean_cell_voltage() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < cell_voltages.size(); ++k) {
        if (k < flags.cells.size() && flags.cells[k]) {
            sum += cell_voltages[k];
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::optional<double> TelemetrySample::mean_temperature() const {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < temperatures.size(); ++k) {
        if (k < flags.temperatures.size() && flags.temperatures[k]) {
            sum += temperatures[k];
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::optional<double> TelemetrySample::temperature(std::size_t sensor) const {
    if (sensor >= temperatures.size() || sensor >= flags.temperatures.size() || !flags.temperatures[sensor])
        return std::nullopt;
    return temperatures[sensor];
}

double charge_throughput_ah(std::span<const TelemetrySample> samples) {
    double as = 0.0;
    const TelemetrySample* prev = nullptr;
    for (const auto& s : samples) {
        if (!s.flags.current) continue;
        if (prev) as += 0.5 * (prev->pack_current + s.pack_current) * (s.timestamp - prev->timestamp);
        prev = &s;
    }
    return as / 3600.0;
}

// ---------------------------------------------------------------------------

ChargeSegment::ChargeSegment(std::vector<TelemetrySample> samples, double nominal_capacity_ah,
                             std::size_t start_index, std::optional<std::size_t> end_index)
    : samples_(std::move(samples)), nominal_capacity_ah_(nominal_capacity_ah), start_index_(start_index) {
    if (nominal_capacity_ah <= 0.0) throw DomainError(kModule, "nominal capacity must be positive");
    if (samples_.size() < 2) throw DomainError(kModule, "a charge segment needs at least two samples");
    double isum = 0.0, tsum = 0.0;
    std::size_t ni = 0, nt = 0;
    for (std::size_t k = 0; k < samples_.size(); ++k) {
        const auto& s = samples_[k];
        if (!std::isfinite(s.timestamp)) throw DomainError(kModule, "non-finite timestamp in segment");
        if (k > 0 && !(s.timestamp > samples_[k - 1].timestamp))
            throw DomainError(kModule, "segment timestamps must be strictly increasing");
        if (s.flags.current) {
            if (s.pack_current < 0.0) throw DomainError(kModule, "negative current inside a charge segment");
            isum += s.pack_current;
            ++ni;
        }
        if (auto t = s.mean_temperature()) {
            tsum += *t;
            ++nt;
        }
    }
    end_index_ = end_index.value_or(start_index_ + samples_.size() - 1);
    throughput_ah_ = charge_throughput_ah(samples_);
    mean_c_rate_ = ni ? isum / static_cast<double>(ni) / nominal_capacity_ah_ : 0.0;
    mean_temperature_ = nt ? tsum / static_cast<double>(nt) : std::numeric_limits<double>::quiet_NaN();
}

double ChargeSegment::duration() const {
    return samples_.empty() ? 0.0 : samples_.back().timestamp - samples_.front().timestamp;
}

// ---------------------------------------------------------------------------

std::size_t RejectReport::total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : by_reason) n += c;
    return n;
}

IngestResult ingest(std::istream& in, const SchemaConfig& schema) {
    IngestResult r = schema.format == FileFormat::delimited ? ingest_delimited(in, schema)
                                                            : ingest_json_lines(in, schema);
    if (r.samples.empty()) throw EmptyInputError(kModule, "no parseable rows in input");
    return r;
}

IngestResult ingest_file(const std::string& path, const SchemaConfig& schema) {
    std::ifstream in(path);
    if (!in) throw IoError(kModule, "cannot open " + path);
    return ingest(in, schema);
}

void write(std::ostream& out, std::span<const TelemetrySample> samples, const SchemaConfig& schema) {
    const std::size_t cells = samples.empty() ? 0 : samples.front().cell_voltages.size();
    const std::size_t temps = samples.empty() ? 0 : samples.front().temperatures.size();
    const double sign = schema.discharge_positive ? -1.0 : 1.0;
    std::string row;

    if (schema.format == FileFormat::json_lines) {
        for (const auto& s : samples) {
            nlohmann::json rec;
            if (schema.time_format == TimeFormat::iso8601) rec[schema.timestamp_column] = format_iso8601(s.timestamp);
            else rec[schema.timestamp_column] = s.timestamp;
            rec[schema.current_column] = s.flags.current ? nlohmann::json(sign * s.pack_current) : nlohmann::json();
            rec[schema.pack_voltage_column] = s.flags.pack_voltage ? nlohmann::json(s.pack_voltage) : nlohmann::json();
            auto arr = nlohmann::json::array();
            for (std::size_t k = 0; k < s.cell_voltages.size(); ++k)
                arr.push_back(s.flags.cells[k] ? nlohmann::json(s.cell_voltages[k]) : nlohmann::json());
            rec["cell_voltages"] = arr;
            arr = nlohmann::json::array();
            for (std::size_t k = 0; k < s.temperatures.size(); ++k)
                arr.push_back(s.flags.temperatures[k] ? nlohmann::json(s.temperatures[k]) : nlohmann::json());
            rec["temperatures"] = arr;
            out << rec.dump() << '\n';
        }
        return;
    }

    const char d = schema.delimiter;
    row = schema.timestamp_column + d + schema.current_column + d + schema.pack_voltage_column;
    for (std::size_t k = 0; k < cells; ++k) row += d + schema.cell_voltage_prefix + std::to_string(k);
    for (std::size_t k = 0; k < temps; ++k) row += d + schema.temperature_prefix + std::to_string(k);
    out << row << '\n';
    for (const auto& s : samples) {
        row.clear();
        if (schema.time_format == TimeFormat::iso8601) row += format_iso8601(s.timestamp);
        else append_number(row, s.timestamp);
        row += d;
        if (s.flags.current) append_number(row, sign * s.pack_current);
        row += d;
        if (s.flags.pack_voltage) append_number(row, s.pack_voltage);
        for (std::size_t k = 0; k < cells; ++k) {
            row += d;
            if (k < s.cell_voltages.size() && s.flags.cells[k]) append_number(row, s.cell_voltages[k]);
        }
        for (std::size_t k = 0; k < temps; ++k) {
            row += d;
            if (k < s.temperatures.size() && s.flags.temperatures[k]) append_number(row, s.temperatures[k]);
        }
        out << row << '\n';
    }
}

void write_file(const std::string& path, std::span<const TelemetrySample> samples, const SchemaConfig& schema) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write " + path);
    write(out, samples, schema);
    if (!out) throw IoError(kModule, "write failed for " + path);
}

void write_rejects(std::ostream& out, const RejectReport& report) {
    out << "reason,count\n";
    for (const auto& [reason, count] : report.by_reason) out << reason << ',' << count << '\n';
    out << "total," << report.total() << '\n';
}

std::optional<double> parse_iso8601(const std::string& text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, consumed = 0;
    double sec = 0.0;
    char sep = 0;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%lf%n", &y, &mo, &d, &sep, &h, &mi, &sec, &consumed) != 7)
        return std::nullopt;
    if ((sep != 'T' && sep != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec < 0 ||
        sec >= 61)
        return std::nullopt;
    std::string_view rest(text.c_str() + consumed);
    double offset = 0.0;
    if (rest == "Z" || rest.empty()) {
        offset = 0.0;
    } else if ((rest[0] == '+' || rest[0] == '-') && rest.size() == 6 && rest[3] == ':') {
        int oh = 0, om = 0;
        if (std::sscanf(rest.data() + 1, "%2d:%2d", &oh, &om) != 2) return std::nullopt;
        offset = (rest[0] == '+' ? 1.0 : -1.0) * (oh * 3600.0 + om * 60.0);
    } else {
        return std::nullopt;
    }
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = 0;
    const auto base = timegm(&tm);
    return static_cast<double>(base) + sec - offset;
}

std::string format_iso8601(double epoch_seconds) {
    const double whole = std::floor(epoch_seconds);
    const auto t = static_cast<std::time_t>(whole);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    std::string out(buf);
    const long micros = std::lround((epoch_seconds - whole) * 1e6);
    if (micros > 0) {
        char frac[16];
        std::snprintf(frac, sizeof frac, ".%06ld", std::min(micros, 999999L));
        out += frac;
    }
    return out + "Z";
}

// ---------------------------------------------------------------------------

CleanResult clean(std::span<const TelemetrySample> samples, const LimitsConfig& limits) {
    CleanResult result;
    auto& rep = result.report;
    result.samples.reserve(samples.size());
    auto in = [](double v, double lo, double hi) { return std::isfinite(v) && v >= lo && v <= hi; };

    for (const auto& src : samples) {
        TelemetrySample s = src;
        s.flags.cells.resize(s.cell_voltages.size(), true);
        s.flags.temperatures.resize(s.temperatures.size(), true);
        if (s.flags.current && !(std::isfinite(s.pack_current) && std::abs(s.pack_current) <= limits.current_abs_max)) {
            s.flags.current = false;
            ++rep.flagged_current;
        }
        const double ncell = std::max<double>(1.0, static_cast<double>(s.cell_voltages.size()));
        const double pv_lo = limits.pack_voltage_min.value_or(limits.cell_voltage_min * ncell);
        const double pv_hi = limits.pack_voltage_max.value_or(limits.cell_voltage_max * ncell);
        if (s.flags.pack_voltage && !in(s.pack_voltage, pv_lo, pv_hi)) {
            s.flags.pack_voltage = false;
            ++rep.flagged_pack_voltage;
        }
        for (std::size_t k = 0; k < s.cell_voltages.size(); ++k) {
            if (s.flags.cells[k] && !in(s.cell_voltages[k], limits.cell_voltage_min, limits.cell_voltage_max)) {
                s.flags.cells[k] = false;
                ++rep.flagged_cell_voltage;
            }
        }
        for (std::size_t k = 0; k < s.temperatures.size(); ++k) {
            if (s.flags.temperatures[k] && !in(s.temperatures[k], limits.temperature_min, limits.temperature_max)) {
                s.flags.temperatures[k] = false;
                ++rep.flagged_temperature;
            }
        }
        if (s.flags.all_invalid()) {
            ++rep.removed_all_invalid;
            continue;
        }
        if (!result.samples.empty()) {
            const double last = result.samples.back().timestamp;
            if (s.timestamp == last) {
                ++rep.removed_duplicate_timestamp;
                continue;
            }
            if (s.timestamp < last) {
                ++rep.removed_out_of_order;
                continue;
            }
        }
        result.samples.push_back(std::move(s));
    }
    return result;
}

// ---------------------------------------------------------------------------

std::vector<ChargeSegment> segment_charges(std::span<const TelemetrySample> samples, const GateConfig& gate) {
    if (gate.nominal_capacity_ah <= 0.0) throw DomainError(kModule, "gate nominal capacity must be positive");
    const double threshold = gate.start_c_rate * gate.nominal_capacity_ah;
    const std::size_t n = samples.size();
    auto charging = [&](std::size_t i) { return samples[i].flags.current && samples[i].pack_current > threshold; };

    // Runs of consecutive charging samples without timestamp holes.
    struct Run {
        std::size_t first, last;
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < n;) {
        if (!charging(i)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && charging(j + 1) && samples[j + 1].timestamp - samples[j].timestamp <= gate.max_gap_s) ++j;
        if (samples[j].timestamp - samples[i].timestamp >= gate.min_dwell_s) runs.push_back({i, j});
        i = j + 1;
    }

    // Merge runs separated by a short non-negative pause.
    std::vector<Run> merged;
    for (const auto& r : runs) {
        if (!merged.empty()) {
            auto& m = merged.back();
            bool joinable = samples[r.first].timestamp - samples[m.last].timestamp <= gate.max_gap_s;
            for (std::size_t k = m.last + 1; joinable && k <= r.first; ++k) {
                if (samples[k].timestamp - samples[k - 1].timestamp > gate.max_gap_s) joinable = false;
                if (samples[k].flags.current && samples[k].pack_current < 0.0) joinable = false;
            }
            if (joinable) {
                m.last = r.last;
                continue;
            }
        }
        merged.push_back(r);
    }

    std::vector<ChargeSegment> out;
    for (const auto& m : merged) {
        std::vector<TelemetrySample> seg;
        seg.reserve(m.last - m.first + 1);
        for (std::size_t k = m.first; k <= m.last; ++k) {
            if (!samples[k].flags.current) continue;
            if (!seg.empty() && !(samples[k].timestamp > seg.back().timestamp)) continue;
            seg.push_back(samples[k]);
        }
        if (seg.size() < 2) continue;
        ChargeSegment cs(std::move(seg), gate.nominal_capacity_ah, m.first, m.last);
        if (cs.duration() < gate.min_duration_s || cs.charge_throughput() < gate.min_throughput_ah) continue;
        out.push_back(std::move(cs));
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> resample_uniform(std::span<const double> t, std::span<const double> v, double t0, double dt,
                                     std::size_t count) {
    if (t.size() != v.size() || t.empty()) throw DomainError(kModule, "resample needs matching non-empty series");
    if (!(dt > 0.0)) throw DomainError(kModule, "resample step must be positive");
    std::vector<double> out(count);
    std::size_t j = 0;
    for (std::size_t k = 0; k < count; ++k) {
        const double tk = t0 + dt * static_cast<double>(k);
        if (tk <= t.front()) {
            out[k] = v.front();
            continue;
        }
        if (tk >= t.back()) {
            out[k] = v.back();
            continue;
        }
        while (j + 1 < t.size() && t[j + 1] < tk) ++j;
        const double w = (tk - t[j]) / (t[j + 1] - t[j]);
        out[k] = v[j] + w * (v[j + 1] - v[j]);
    }
    return out;
}

std::vector<SignalWindow> window_signals(std::span<const TelemetrySample> samples, const SensorSelector& selector,
                                         std::size_t window_len, std::size_t stride, const WindowConfig& config) {
    if (window_len < 2) throw DomainError(kModule, "window length must be at least 2");
    if (stride < 1) throw DomainError(kModule, "window stride must be at least 1");
    if (!(config.dt > 0.0)) throw DomainError(kModule, "window dt must be positive");
    if (samples.size() < 2) return {};

    std::vector<int> channels = selector.channels;
    if (channels.empty()) {
        std::size_t count = 1;
        if (selector.kind == SignalKind::temperature) count = samples.front().temperatures.size();
        if (selector.kind == SignalKind::cell_voltage) count = samples.front().cell_voltages.size();
        channels.resize(count);
        std::iota(channels.begin(), channels.end(), 0);
    }

    const double t0 = samples.front().timestamp;
    const double span = samples.back().timestamp - t0;
    const auto grid = static_cast<std::size_t>(std::floor(span / config.dt + 1e-9)) + 1;
    if (grid < window_len) return {};
    const std::size_t n_windows = (grid - window_len) / stride + 1;

    std::vector<std::vector<double>> series;
    std::vector<int> ids;
    for (int ch : channels) {
        std::vector<double> t, v;
        for (const auto& s : samples) {
            std::optional<double> x;
            switch (selector.kind) {
            case SignalKind::temperature: x = s.temperature(static_cast<std::size_t>(ch)); break;
            case SignalKind::cell_voltage:
                if (ch >= 0 && static_cast<std::size_t>(ch) < s.cell_voltages.size() && s.flags.cells[ch])
                    x = s.cell_voltages[ch];
                break;
            case SignalKind::pack_current: x = s.current(); break;
            case SignalKind::pack_voltage:
                if (s.flags.pack_voltage) x = s.pack_voltage;
                break;
            }
            if (x) {
                t.push_back(s.timestamp);
                v.push_back(*x);
            }
        }
        if (t.size() < 2) continue;
        series.push_back(resample_uniform(t, v, t0, config.dt, grid));
        ids.push_back(ch);
    }

    std::vector<SignalWindow> out;
    out.reserve(n_windows * series.size());
    for (std::size_t w = 0; w < n_windows; ++w) {
        const std::size_t begin = w * stride;
        for (std::size_t c = 0; c < series.size(); ++c) {
            SignalWindow win;
            win.sensor_id = ids[c];
            win.dt = config.dt;
            win.origin_timestamp = t0 + config.dt * static_cast<double>(begin);
            win.values.assign(series[c].begin() + static_cast<std::ptrdiff_t>(begin),
                              series[c].begin() + static_cast<std::ptrdiff_t>(begin + window_len));
            auto [lo, hi] = std::minmax_element(win.values.begin(), win.values.end());
            win.is_static = (*hi - *lo) < config.static_peak_to_peak;
            out.push_back(std::move(win));
        }
    }
    return out;
}

} // namespace battkit::telemetry
