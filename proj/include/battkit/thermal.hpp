#pragma once

#include "battkit/telemetry.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace battkit::thermal {

/// Detector knobs. Distances are SBD values in [0, 2]; temperatures in degC.
struct Thresholds {
    std::size_t k = 2;
    std::size_t restarts = 3;
    std::size_t max_iterations = 50;
    std::uint64_t seed = 1;
    /// Clusters whose centroids are closer than this are merged into one.
    double sep_min = 0.25;
    /// Savitzky-Golay preprocessing of each window.
    std::size_t smooth_window = 15;
    std::size_t smooth_order = 2;
    /// Smoothed peak-to-peak below this marks a window static.
    double static_p2p = 0.5;
    /// Static/active disagreement only isolates a sensor when the active side
    /// swings at least this much, and at least `lone_active_ratio` times the
    /// other side. Sensors cooling down after a drive cross the static
    /// threshold at slightly different times; the ratio keeps them quiet.
    double lone_active_p2p = 0.6;
    double lone_active_ratio = 3.0;
    double rise_factor = 3.0;
    double rise_abs = 0.15;
    /// Shapes of windows that swing less than this are dominated by sensor
    /// noise, so their fitting error cannot raise an alarm.
    double rise_min_p2p = 1.0;
    /// Trailing fitting-error history per sensor, in batches.
    std::size_t trailing = 48;
    /// Minimum history before the trailing comparison is trusted.
    std::size_t min_history = 8;
    /// Trigger-free batches before the reference state freezes.
    std::size_t warmup = 24;
    /// Evaluate fitting-error rise even when membership already fired.
    bool evaluate_both = false;
};

/// Cluster id used for the static pseudo-group.
inline constexpr int kStaticGroup = -1;

struct ClusterSnapshot {
    std::vector<std::vector<double>> centroids;
    /// sensor -> cluster id (kStaticGroup for static windows).
    std::map<int, int> memberships;
    /// Sensors outside the majority group.
    std::set<int> out;
};

struct ShapeClusterState {
    std::size_t k = 2;
    std::vector<std::vector<double>> centroids;
    std::map<int, int> memberships;
    /// Per sensor, SBD to the assigned centroid for recent batches.
    std::map<int, std::deque<double>> fitting_errors;
    ClusterSnapshot predecessor;
    ClusterSnapshot reference;
    /// Median fitting error per sensor at the time the reference froze.
    std::map<int, double> reference_baseline;
    bool reference_frozen = false;
    bool initialized = false;
    std::set<int> sensors;
    std::size_t batches = 0;
    std::size_t trigger_free = 0;
};

enum class Criterion { none, membership_change, fitting_error_rise };

struct SensorEvidence {
    int sensor_id = 0;
    /// SBD to the assigned centroid (0 for static windows).
    double sbd = 0.0;
    /// Rise of `sbd` over the larger of the trailing median and reference
    /// baseline.
    double delta = 0.0;
    double peak_to_peak = 0.0;
    int cluster = 0;
    bool membership_changed = false;
    bool rise_exceeded = false;
};

struct AnomalyVerdict {
    bool triggered = false;
    Criterion criterion = Criterion::none;
    std::vector<int> offending_sensors;
    std::vector<SensorEvidence> evidence;
    double window_origin = 0.0;
    /// Time the last sample of the batch was taken.
    double window_end = 0.0;
    std::vector<int> missing_sensors;
};

struct DetectResult {
    AnomalyVerdict verdict;
    ShapeClusterState state;
};

/// Clusters one time slice of windows and compares it with the previous and
/// the frozen reference state. Throws DomainError on an empty batch or
/// inconsistent window lengths.
DetectResult detect(std::span<const telemetry::SignalWindow> batch, const ShapeClusterState& state,
                    const Thresholds& thresholds);

/// Sensors that changed membership or exceeded the rise thresholds, largest
/// rise first.
std::vector<int> isolate(const AnomalyVerdict& verdict, const ShapeClusterState& state);

/// Groups windows by origin timestamp, oldest first.
std::vector<std::vector<telemetry::SignalWindow>> batches_by_origin(std::span<const telemetry::SignalWindow> windows);

std::string state_to_json(const ShapeClusterState& state);
ShapeClusterState state_from_json(const std::string& text);
void save_state(const ShapeClusterState& state, const std::string& path);
ShapeClusterState load_state(const std::string& path);

/// One JSON object per verdict, without a trailing newline.
std::string verdict_to_json(const AnomalyVerdict& verdict);

const char* to_string(Criterion c);

} // namespace battkit::thermal
