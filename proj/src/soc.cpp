#include "battkit/soc.hpp"

#include "battkit/error.hpp"

#include <algorithm>
#include <cmath>

namespace battkit::soc {

namespace {
constexpr const char* kModule = "socmodel";
}

CoulombTrace coulomb_count(std::span<const double> timestamps, std::span<const double> current, double capacity_ah,
                           double z0) {
    if (!(capacity_ah > 0.0)) throw DomainError(kModule, "capacity must be positive");
    if (!(z0 >= 0.0 && z0 <= 1.0)) throw DomainError(kModule, "initial SOC must lie in [0, 1]");
    if (timestamps.size() != current.size()) throw DomainError(kModule, "timestamp/current length mismatch");

    CoulombTrace out;
    out.estimates.reserve(timestamps.size());
    out.raw_percent.reserve(timestamps.size());
    const double capacity_as = capacity_ah * 3600.0;
    double charge_as = 0.0;
    for (std::size_t k = 0; k < timestamps.size(); ++k) {
        if (k > 0) charge_as += 0.5 * (current[k - 1] + current[k]) * (timestamps[k] - timestamps[k - 1]);
        const double raw = 100.0 * (z0 + charge_as / capacity_as);
        const double clamped = std::clamp(raw, 0.0, 100.0);
        if (clamped != raw) ++out.clamp_events;
        out.raw_percent.push_back(raw);
        out.estimates.push_back({clamped, timestamps[k], SocSource::coulomb});
    }
    return out;
}

CoulombTrace coulomb_count(const telemetry::ChargeSegment& segment, double capacity_ah, double z0) {
    std::vector<double> t, i;
    for (const auto& s : segment.samples()) {
        if (auto c = s.current()) {
            t.push_back(s.timestamp);
            i.push_back(*c);
        }
    }
    return coulomb_count(t, i, capacity_ah, z0);
}

std::size_t WindowConfig::downsample_steps() const {
    if (!(dt_s > 0.0)) throw DomainError(kModule, "window dt must be positive");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(downsample_s / dt_s)));
}

Normalization Normalization::fit(std::span<const std::vector<double>> rows) {
    if (rows.empty()) throw DomainError(kModule, "cannot fit normalisation on no rows");
    const std::size_t d = rows.front().size();
    Normalization n;
    n.mean.assign(d, 0.0);
    n.scale.assign(d, 0.0);
    for (const auto& r : rows) {
        if (r.size() != d) throw DomainError(kModule, "ragged feature rows");
        for (std::size_t j = 0; j < d; ++j) n.mean[j] += r[j];
    }
    const double count = static_cast<double>(rows.size());
    for (auto& m : n.mean) m /= count;
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j) n.scale[j] += (r[j] - n.mean[j]) * (r[j] - n.mean[j]);
    for (auto& s : n.scale) {
        s = std::sqrt(s / count);
        if (!(s > 0.0)) s = 1.0;
    }
    return n;
}

std::vector<double> Normalization::apply(std::span<const double> x) const {
    if (x.size() != mean.size()) throw DomainError(kModule, "feature length does not match normalisation");
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - mean[j]) / scale[j];
    return out;
}

std::vector<FeatureRow> build_features(const telemetry::ChargeSegment& segment, const WindowConfig& config,
                                       const Normalization* norm) {
    const std::size_t step = config.downsample_steps();
    std::vector<double> tv, v, ti, cur, tt, temp;
    for (const auto& s : segment.samples()) {
        if (auto x = s.mean_cell_voltage()) {
            tv.push_back(s.timestamp);
            v.push_back(*x);
        }
        if (auto x = s.current()) {
            ti.push_back(s.timestamp);
            cur.push_back(*x);
        }
        if (auto x = s.mean_temperature()) {
            tt.push_back(s.timestamp);
            temp.push_back(*x);
        }
    }
    if (tv.size() < 2 || ti.size() < 2 || tt.size() < 2) return {};

    const double t0 = segment.samples().front().timestamp;
    const double span = segment.samples().back().timestamp - t0;
    const auto count = static_cast<std::size_t>(std::floor(span / config.dt_s + 1e-9)) + 1;
    const std::size_t lag = config.history * step;
    if (count <= lag) return {};

    const auto V = telemetry::resample_uniform(tv, v, t0, config.dt_s, count);
    const auto I = telemetry::resample_uniform(ti, cur, t0, config.dt_s, count);
    const auto T = telemetry::resample_uniform(tt, temp, t0, config.dt_s, count);

    std::vector<FeatureRow> rows;
    rows.reserve(count - lag);
    for (std::size_t k = lag; k < count; ++k) {
        FeatureRow row;
        row.timestamp = t0 + config.dt_s * static_cast<double>(k);
        row.values.reserve(config.feature_length());
        for (std::size_t h = 0; h <= config.history; ++h) {
            const std::size_t idx = k - h * step;
            row.values.push_back(V[idx]);
            row.values.push_back(I[idx]);
            row.values.push_back(T[idx]);
        }
        if (norm && !norm->empty()) row.values = norm->apply(row.values);
        rows.push_back(std::move(row));
    }
    return rows;
}

SocEstimate rate_limit(const SocEstimate& previous, const SocEstimate& candidate, double max_step_per_s) {
    if (!(max_step_per_s > 0.0)) throw DomainError(kModule, "rate limit must be positive");
    const double dt = std::max(0.0, candidate.timestamp - previous.timestamp);
    const double budget = max_step_per_s * dt;
    SocEstimate out = candidate;
    out.soc = previous.soc + std::clamp(candidate.soc - previous.soc, -budget, budget);
    return out;
}

} // namespace battkit::soc
