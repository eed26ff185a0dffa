#pragma once

#include "battkit/telemetry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace battkit::soc {

enum class SocSource { coulomb, network };

/// State of charge in percent, always within [0, 100].
struct SocEstimate {
    double soc = 0.0;
    double timestamp = 0.0;
    SocSource source = SocSource::coulomb;
};

struct CoulombTrace {
    std::vector<SocEstimate> estimates;
    /// Unclamped z(t) in percent, useful for additivity checks.
    std::vector<double> raw_percent;
    std::size_t clamp_events = 0;
};

/// z(t) = z0 + (1/C) * integral of i dt (trapezoidal), reported in percent
/// and clamped to [0, 100]. Current in amperes, time in seconds.
CoulombTrace coulomb_count(std::span<const double> timestamps, std::span<const double> current,
                           double capacity_ah, double z0);
CoulombTrace coulomb_count(const telemetry::ChargeSegment& segment, double capacity_ah, double z0);

/// Present/historical input layout of the SOC network.
struct WindowConfig {
    /// Uniform resampling step for the segment.
    double dt_s = 10.0;
    /// Number of historical steps H.
    std::size_t history = 4;
    /// Spacing between historical steps.
    double downsample_s = 30.0;

    std::size_t downsample_steps() const;
    std::size_t feature_length() const { return 3 * (history + 1); }
};

/// Per-feature affine normalisation x' = (x - mean) / scale.
struct Normalization {
    std::vector<double> mean;
    std::vector<double> scale;

    /// Population mean and standard deviation of each column. Columns with
    /// zero spread get scale 1.
    static Normalization fit(std::span<const std::vector<double>> rows);
    std::vector<double> apply(std::span<const double> x) const;
    bool empty() const { return mean.empty(); }
};

struct FeatureRow {
    /// [V, I, T](t), [V, I, T](t - d), ..., [V, I, T](t - H d)
    std::vector<double> values;
    double timestamp = 0.0;
};

/// Resamples the segment (mean cell voltage, pack current, mean temperature)
/// onto the uniform grid and emits one row per step that has H historical
/// steps behind it. Rows are normalised when `norm` is given and non-empty.
std::vector<FeatureRow> build_features(const telemetry::ChargeSegment& segment, const WindowConfig& config,
                                       const Normalization* norm = nullptr);

/// Moves from `previous` toward `candidate` by at most
/// max_step_per_s * (candidate.timestamp - previous.timestamp).
SocEstimate rate_limit(const SocEstimate& previous, const SocEstimate& candidate, double max_step_per_s);

} // namespace battkit::soc
