#pragma once

#include "battkit/telemetry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace battkit::synth {

/// Half-cell open-circuit potential sampled on stoichiometry [0, 1].
struct OcpTable {
    std::vector<double> stoichiometry;
    std::vector<double> volts;

    /// Linear interpolation, clamped to the table ends.
    double operator()(double x) const;
    /// Throws DomainError unless the table is strictly monotone in both axes.
    void validate() const;
};

/// Graphite-like anode: low-voltage staging plateaus.
OcpTable graphite_ocp(std::size_t points = 2001);
/// Layered-oxide cathode with one step, giving NMC-like peaks.
OcpTable nmc_ocp(std::size_t points = 2001);
/// Flat LFP-like cathode.
OcpTable lfp_ocp(std::size_t points = 2001);

struct RcPair {
    double resistance = 0.008;   // ohm
    double capacitance = 2500.0;  // farad
};

struct CellSimConfig {
    double nominal_capacity = 3.0;  // Ah
    OcpTable anode_ocp = graphite_ocp();
    OcpTable cathode_ocp = nmc_ocp();
    /// Electrode capacities relative to nominal.
    double anode_ratio = 1.12;
    double cathode_ratio = 1.25;
    double empty_voltage = 3.0;
    double full_charge_voltage = 4.2;
    double series_resistance = 0.012;
    std::vector<RcPair> rc_pairs = {RcPair{}};
    /// CV phase ends when the current falls to this fraction of 1C.
    double taper_current = 0.02;
    /// Resistances and smearing follow exp(T_a (1/T - 1/T_ref)).
    double resistance_activation_k = 3000.0;
    double reference_temperature = 25.0;
    /// Overpotential spread along the charge axis, as a fraction of nominal
    /// capacity per 1C of current.
    double smear_per_c = 0.05;
    double cell_heat_capacity = 200.0;  // J/K
    double cell_cooling = 0.5;          // W/K
    std::size_t cells_in_series = 1;
    std::size_t temperature_sensors = 1;
    double voltage_noise = 0.002;      // V
    double temperature_noise = 0.1;    // degC
    /// Charger ripple, a real current fluctuation.
    double current_ripple = 0.010;     // A
};

struct DegradationState {
    double lli = 0.0;
    double lam_a = 0.0;
    double lam_c = 0.0;

    void validate() const;
};

/// Electrode bookkeeping for one degradation state. L is the lithium held by
/// the anode, in Ah.
class CellModel {
public:
    CellModel(const CellSimConfig& config, const DegradationState& degradation);

    double ocv(double lithium) const;
    /// OCV averaged over a Gaussian spread of `sigma_ah` along L.
    double ocv_smeared(double lithium, double sigma_ah) const;
    double empty_lithium() const { return empty_; }
    double full_lithium() const { return full_; }
    double capacity() const { return full_ - empty_; }
    double inventory() const { return inventory_; }
    double anode_capacity() const { return anode_q_; }
    double cathode_capacity() const { return cathode_q_; }
    /// Lithium at a state of charge in [0, 1].
    double lithium_at(double soc) const { return empty_ + soc * capacity(); }
    const CellSimConfig& config() const { return config_; }

private:
    CellSimConfig config_;
    double anode_q_ = 0.0;
    double cathode_q_ = 0.0;
    double inventory_ = 0.0;
    double empty_ = 0.0;
    double full_ = 0.0;
};

/// Lithium inventory of a fresh cell whose capacity equals nominal.
double fresh_inventory(const CellSimConfig& config);

enum class ChargeProfile {
    cccv,
    /// Roughly constant power at c_rate * C_N * 3.7 V, then CV.
    constant_power,
};

struct ChargeSimConfig {
    double c_rate = 0.5;
    double dt = 1.0;
    double ambient = 25.0;
    double start_soc = 0.0;
    double rest_before_s = 300.0;
    double rest_after_s = 300.0;
    double start_time = 1699920000.0;  // a UTC midnight
    ChargeProfile profile = ChargeProfile::cccv;
    double max_cv_s = 4.0 * 3600.0;
    std::uint64_t seed = 1;
};

struct SimulatedCharge {
    std::vector<telemetry::TelemetrySample> samples;
    /// Charging portion only.
    telemetry::ChargeSegment segment;
    /// Hidden truth per sample, percent of true capacity.
    std::vector<double> true_soc;
    double true_capacity = 0.0;
    double true_soh = 0.0;
    /// Charge actually delivered during the charging portion, Ah.
    double delivered = 0.0;
    std::size_t charge_begin = 0;
    std::size_t charge_end = 0;
};

SimulatedCharge simulate_charge(const CellSimConfig& cell, const DegradationState& degradation,
                                const ChargeSimConfig& config);

// ---------------------------------------------------------------------------
// Thermal
// ---------------------------------------------------------------------------

struct ThermalSimConfig {
    std::size_t sensors = 16;
    double lumped_heat_capacity = 2000.0;  // J/K per node
    double cooling_coefficient = 0.8;      // W/K per node
    /// Relative node-to-node spread of heat capacity, cooling and heat share.
    double node_variation = 0.05;
    double coolant_temperature = 22.0;
    double coolant_amplitude = 3.0;
    /// Time of day (s) at which the coolant peaks.
    double coolant_peak_s = 15.0 * 3600.0;
    double arrhenius_prefactor = 1e17;      // W
    double activation_temperature = 12000;  // K
    double max_fault_power = 200.0;         // W
    double initial_temperature = 22.0;
    double sensor_noise = 0.1;
    double start_time = 1699920000.0;  // a UTC midnight
    std::uint64_t seed = 1;
};

/// Piecewise-constant heat input per node, watts, starting at t = 0.
struct DutyProfile {
    std::vector<double> times;  // segment starts, seconds from start
    std::vector<double> watts;
    /// Pack current during each segment, A (negative while driving).
    std::vector<double> currents;

    double at(double t) const;
    double current_at(double t) const;
};

struct DutyConfig {
    double drive_power = 8.0;
    double charge_power = 2.5;
};

/// Commute-style schedule: morning and evening drives, an occasional midday
/// trip, and a slow charge after the evening drive, with seeded jitter.
DutyProfile ev_duty(double days, std::uint64_t seed, const DutyConfig& config = {});

enum class FaultKind { none, drift, step, runaway_seed, sensor_stuck };

/// drift: degC per hour added to the reading; step: degC added to the
/// reading; runaway_seed: growth per hour of the Arrhenius self-heating
/// multiplier; sensor_stuck: reading frozen at its onset value.
struct FaultSpec {
    FaultKind kind = FaultKind::none;
    double onset = 0.0;  // s from start
    double magnitude = 0.0;
    int sensor = 0;
};

struct ThermalTrace {
    std::vector<double> timestamps;
    /// readings[k][s]: noisy sensor readings.
    std::vector<std::vector<double>> readings;
    /// Node temperatures without measurement effects.
    std::vector<std::vector<double>> truth;
    /// Per node, integral of generation and of cooling, J.
    std::vector<double> generated;
    std::vector<double> cooled;
    std::vector<double> heat_capacity;
};

ThermalTrace simulate_thermal(const ThermalSimConfig& config, const DutyProfile& duty, const FaultSpec& fault,
                              double horizon_s, double dt);

/// First time a series reaches `threshold`, or nothing.
std::optional<double> first_crossing(const ThermalTrace& trace, int sensor, double threshold, bool use_readings = true);

std::vector<telemetry::TelemetrySample> thermal_samples(const ThermalTrace& trace, const DutyProfile& duty);

// ---------------------------------------------------------------------------
// Scenario emission
// ---------------------------------------------------------------------------

/// Writes `<out>/<group>/<id>.csv` telemetry and `<out>/truth/` ground truth
/// for the JSON scenario. Returns written paths relative to `output_dir`,
/// sorted. Throws IoError when the directory cannot be written.
std::vector<std::string> emit_fleet(const std::string& scenario_json, const std::string& output_dir);

const char* to_string(FaultKind k);
FaultKind fault_kind_from_string(const std::string& s);

} // namespace battkit::synth
