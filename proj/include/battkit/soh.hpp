#pragma once

#include "battkit/telemetry.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace battkit::soh {

/// Capacitive state of health in percent: 100 * q_dis_max / c_n.
double soh_c(double q_dis_max_ah, double c_n_ah);

// ---------------------------------------------------------------------------
// Gate
// ---------------------------------------------------------------------------

struct GateConfig {
    double max_c_rate = 0.5;
    /// Absolute slack on max_c_rate for current ripple and rounding.
    double c_rate_tolerance = 0.02;
    /// Minimum charge throughput as a fraction of nominal capacity.
    double min_charge_fraction = 0.5;
    std::optional<double> temperature_min;
    std::optional<double> temperature_max;
};

struct GateDecision {
    bool accepted = false;
    /// "ok", "c-rate", "insufficient charge span" or "temperature".
    std::string reason;
    double mean_c_rate = 0.0;
    double charge_fraction = 0.0;
    double mean_temperature = 0.0;
};

GateDecision gate_segment(const telemetry::ChargeSegment& segment, const GateConfig& config);

// ---------------------------------------------------------------------------
// Differential curves
// ---------------------------------------------------------------------------

struct DiffConfig {
    /// Charge bin width; zero means nominal capacity / 200.
    double bin_ah = 0.0;
    std::size_t sg_window = 9;
    std::size_t sg_order = 2;
    double epsilon = 1e-6;
    /// The CV tail starts at the first sample within this of the maximum
    /// voltage.
    double cv_tolerance_v = 0.010;
    std::size_t min_bins = 20;
};

struct SmoothingMeta {
    std::size_t window = 0;
    std::size_t order = 0;
    double bin_ah = 0.0;
};

/// Curves sampled between consecutive charge bins. All arrays share one
/// length; masked entries hold 0.
struct DifferentialCurves {
    std::vector<double> q_axis;  // Ah from the start of the segment
    std::vector<double> v_axis;  // V
    std::vector<double> ic;      // Ah/V
    std::vector<double> dv;      // V/Ah
    std::vector<bool> ic_mask;   // true = masked
    std::vector<bool> dv_mask;
    /// Raw voltage step between the bins around each entry.
    std::vector<double> delta_v;
    SmoothingMeta smoothing;
    double nominal_capacity = 0.0;
    /// Throughput over the constant-current span that was analysed.
    double cc_charge_ah = 0.0;
    double mean_c_rate = 0.0;
    double mean_temperature = 0.0;

    std::size_t size() const { return q_axis.size(); }
};

/// Charge-binned dV/dQ with Savitzky-Golay smoothing, and dQ/dV as its
/// reciprocal. The CV tail is dropped first. Throws InsufficientDataError
/// when fewer than `min_bins` survive.
DifferentialCurves differential_curves(const telemetry::ChargeSegment& segment, const DiffConfig& config);

/// Same pipeline on raw (t, I, V) arrays.
DifferentialCurves differential_curves(std::span<const double> t, std::span<const double> current,
                                       std::span<const double> voltage, double nominal_capacity_ah,
                                       double mean_temperature, const DiffConfig& config);

/// sum of ic * delta_v over unmasked entries: the charge recovered from the
/// IC curve.
double integrate_ic(const DifferentialCurves& curves);

enum class CurveKind { dv, ic };
/// Two columns: q and dv, or v and ic. Masked entries are skipped.
void write_curve(std::ostream& out, const DifferentialCurves& curves, CurveKind kind);

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

enum class FeatureKind { distance, height, location };
enum class ExtremumKind { peak, valley };

/// A named feature. Ordinals count extrema from the low end starting at 1,
/// or from the high end when negative (-1 is the last).
struct FeatureSpec {
    std::string id;
    FeatureKind kind = FeatureKind::distance;
    CurveKind curve = CurveKind::dv;
    ExtremumKind extremum = ExtremumKind::peak;
    int ordinal_a = -2;
    int ordinal_b = -1;
    bool required = true;
};

struct FeatureConfig {
    std::vector<FeatureSpec> features;
    /// Minimum prominence in units normalised by nominal capacity:
    /// V per (Ah / C_N) on the DV curve, (Ah / C_N) per V on the IC curve.
    double dv_min_prominence = 0.02;
    double ic_min_prominence = 0.2;
    /// Minimum separation in bins.
    std::size_t min_separation = 5;
    /// Extrema are only searched where the curve voltage lies in this window.
    double voltage_min = 0.0;
    double voltage_max = 1e9;

    /// DV top-two peak distance, plus an optional distance to the third.
    static FeatureConfig defaults();
};

struct Landmark {
    double q = 0.0;
    double v = 0.0;
    double height = 0.0;
    double prominence = 0.0;
    CurveKind curve = CurveKind::dv;
    ExtremumKind kind = ExtremumKind::peak;
    std::size_t index = 0;
};

struct DvaFeatureSet {
    std::vector<Landmark> peaks;
    std::vector<Landmark> valleys;
    /// Distances between neighbouring DV peaks, Ah.
    std::vector<double> pairwise_distances;
    /// Values of the named features that could be located.
    std::map<std::string, double> values;
    double mean_temperature = 0.0;
    double mean_c_rate = 0.0;
};

/// Throws FeatureMissingError when a required feature cannot be located.
DvaFeatureSet extract_features(const DifferentialCurves& curves, const FeatureConfig& config);

// ---------------------------------------------------------------------------
// Lookup table
// ---------------------------------------------------------------------------

struct CalibrationSample {
    DvaFeatureSet features;
    double soh = 0.0;
    double temperature = 0.0;
};

struct LutConfig {
    double r2_threshold = 0.8;
    std::size_t min_levels = 5;
    /// Samples whose temperatures round to the same multiple of this share a row.
    double temperature_step = 1.0;
};

struct LutRow {
    std::string feature;
    double temperature = 0.0;
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    double residual_variance = 0.0;
    double feature_min = 0.0;
    double feature_max = 0.0;
    std::size_t count = 0;
};

struct SohLut {
    FeatureConfig features;
    /// Rows sorted by feature, then temperature. Only features that met the
    /// R2 threshold at every temperature are kept.
    std::vector<LutRow> rows;
    std::vector<std::string> excluded;

    std::vector<std::string> feature_ids() const;
    double temperature_min() const;
    double temperature_max() const;
};

SohLut build_lut(std::span<const CalibrationSample> samples, const FeatureConfig& features, const LutConfig& config);

enum class Confidence { in_range, extrapolated, degraded_by_c_rate };

struct FeatureContribution {
    std::string feature;
    double value = 0.0;
    double soh = 0.0;
    double variance = 0.0;
    double weight = 0.0;
    bool extrapolated = false;
};

struct SohEstimate {
    double soh_c = 0.0;
    std::vector<FeatureContribution> contributions;
    Confidence confidence = Confidence::in_range;
};

struct EstimateConfig {
    /// Charges faster than this (plus tolerance) are flagged.
    double max_c_rate = 0.5;
    double c_rate_tolerance = 0.02;
    double variance_floor = 1e-12;
    double ceiling = 110.0;
};

SohEstimate estimate_soh(const DvaFeatureSet& features, const SohLut& lut, const EstimateConfig& config = {});

void write_lut(std::ostream& out, const SohLut& lut);
SohLut read_lut(std::istream& in);
void save_lut(const SohLut& lut, const std::string& path);
SohLut load_lut(const std::string& path);

const char* to_string(Confidence c);
const char* to_string(CurveKind c);
const char* to_string(FeatureKind k);
const char* to_string(ExtremumKind k);

} // namespace battkit::soh
