#include "battkit/synth.hpp"

#include "battkit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <set>
#include <sstream>

namespace battkit::synth {

namespace {

constexpr const char* kModule = "synthcell";
constexpr double kKelvin = 273.15;

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

OcpTable tabulate(std::size_t points, const std::function<double(double)>& f) {
    if (points < 2) throw DomainError(kModule, "an OCP table needs at least two points");
    OcpTable t;
    t.stoichiometry.resize(points);
    t.volts.resize(points);
    for (std::size_t i = 0; i < points; ++i) {
        const double x = static_cast<double>(i) / static_cast<double>(points - 1);
        t.stoichiometry[i] = x;
        t.volts[i] = f(x);
    }
    t.validate();
    return t;
}

/// Root of an increasing function on [lo, hi] by bisection.
double bisect(const std::function<double(double)>& f, double lo, double hi) {
    for (int i = 0; i < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++i) {
        const double mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Probabilists' Gauss-Hermite rule, five nodes, weights summing to 1.
constexpr std::array<double, 5> kGhNodes = {-2.856970013872806, -1.355626179974266, 0.0, 1.355626179974266,
                                            2.856970013872806};
constexpr std::array<double, 5> kGhWeights = {0.011257411327720691, 0.2220759220056126, 0.5333333333333333,
                                              0.2220759220056126, 0.011257411327720691};

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

} // namespace

// ---------------------------------------------------------------------------
// OCP tables
// ---------------------------------------------------------------------------

double OcpTable::operator()(double x) const {
    if (x <= stoichiometry.front()) return volts.front();
    if (x >= stoichiometry.back()) return volts.back();
    const auto it = std::upper_bound(stoichiometry.begin(), stoichiometry.end(), x);
    const auto k = static_cast<std::size_t>(it - stoichiometry.begin());
    const double w = (x - stoichiometry[k - 1]) / (stoichiometry[k] - stoichiometry[k - 1]);
    return volts[k - 1] + w * (volts[k] - volts[k - 1]);
}

void OcpTable::validate() const {
    if (stoichiometry.size() < 2 || stoichiometry.size() != volts.size())
        throw DomainError(kModule, "OCP table needs matching axes of at least two points");
    const bool rising = volts.back() > volts.front();
    for (std::size_t i = 1; i < volts.size(); ++i) {
        if (!(stoichiometry[i] > stoichiometry[i - 1])) throw DomainError(kModule, "OCP stoichiometry must increase");
        if (rising ? !(volts[i] > volts[i - 1]) : !(volts[i] < volts[i - 1]))
            throw DomainError(kModule, "OCP table is not monotone");
    }
}

OcpTable graphite_ocp(std::size_t points) {
    return tabulate(points, [](double x) {
        return 0.085 + 0.045 * sigmoid((0.30 - x) / 0.015) + 0.07 * sigmoid((0.12 - x) / 0.02) - 0.02 * (x - 0.5) +
               0.5 * std::exp(-x / 0.02) - 0.3 * std::exp((x - 1.0) / 0.01);
    });
}

OcpTable nmc_ocp(std::size_t points) {
    return tabulate(points, [](double y) {
        return 4.32 - 1.0 * y + 0.07 * sigmoid((0.35 - y) / 0.02) - 0.8 * std::exp((y - 1.0) / 0.025);
    });
}

OcpTable lfp_ocp(std::size_t points) {
    return tabulate(points, [](double y) {
        return 3.42 - 0.05 * y + 0.4 * std::exp(-y / 0.015) - 0.5 * std::exp((y - 1.0) / 0.02);
    });
}

// ---------------------------------------------------------------------------
// Cell model
// ---------------------------------------------------------------------------

void DegradationState::validate() const {
    for (double v : {lli, lam_a, lam_c})
        if (!(v >= 0.0 && v < 1.0)) throw DomainError(kModule, "degradation fractions must lie in [0, 1)");
}

namespace {

struct Electrodes {
    double qa, qc, n;
    const OcpTable* ua;
    const OcpTable* uc;

    double ocv(double L) const { return (*uc)((n - L) / qc) - (*ua)(L / qa); }
    double lo() const { return std::max(0.0, n - qc); }
    double hi() const { return std::min(qa, n); }
};

/// (empty, full) anode lithium, or nothing when the voltage window is not
/// reachable.
std::optional<std::pair<double, double>> window(const Electrodes& e, double vmin, double vmax) {
    const double lo = e.lo(), hi = e.hi();
    if (!(hi > lo)) return std::nullopt;
    if (!(e.ocv(hi) > vmax)) return std::nullopt;
    const double empty = e.ocv(lo) >= vmin ? lo : bisect([&](double L) { return e.ocv(L) - vmin; }, lo, hi);
    const double full = bisect([&](double L) { return e.ocv(L) - vmax; }, empty, hi);
    if (!(full > empty)) return std::nullopt;
    return std::make_pair(empty, full);
}

} // namespace

double fresh_inventory(const CellSimConfig& c) {
    if (!(c.nominal_capacity > 0.0)) throw DomainError(kModule, "nominal capacity must be positive");
    c.anode_ocp.validate();
    c.cathode_ocp.validate();
    Electrodes e{c.anode_ratio * c.nominal_capacity, c.cathode_ratio * c.nominal_capacity, 0.0, &c.anode_ocp,
                 &c.cathode_ocp};
    auto excess = [&](double n) -> std::optional<double> {
        e.n = n;
        const auto w = window(e, c.empty_voltage, c.full_charge_voltage);
        if (!w) return std::nullopt;
        return (w->second - w->first) - c.nominal_capacity;
    };
    // Scan for the first sign change, then bisect.
    const double start = 0.5 * c.nominal_capacity;
    const double stop = (c.anode_ratio + c.cathode_ratio) * c.nominal_capacity;
    const int steps = 400;
    double prev_n = start;
    std::optional<double> prev = excess(start);
    for (int i = 1; i <= steps; ++i) {
        const double n = start + (stop - start) * i / steps;
        const auto cur = excess(n);
        if (prev && cur && *prev < 0.0 && *cur >= 0.0) {
            double lo = prev_n, hi = n;
            for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
                const double mid = 0.5 * (lo + hi);
                const auto v = excess(mid);
                if (v && *v < 0.0)
                    lo = mid;
                else
                    hi = mid;
            }
            return 0.5 * (lo + hi);
        }
        prev = cur;
        prev_n = n;
    }
    throw DomainError(kModule, "no lithium inventory gives the nominal capacity for these electrodes");
}

CellModel::CellModel(const CellSimConfig& config, const DegradationState& degradation) : config_(config) {
    degradation.validate();
    anode_q_ = config.anode_ratio * config.nominal_capacity * (1.0 - degradation.lam_a);
    cathode_q_ = config.cathode_ratio * config.nominal_capacity * (1.0 - degradation.lam_c);
    inventory_ = fresh_inventory(config) * (1.0 - degradation.lli);
    const Electrodes e{anode_q_, cathode_q_, inventory_, &config_.anode_ocp, &config_.cathode_ocp};
    const auto w = window(e, config.empty_voltage, config.full_charge_voltage);
    if (!w) throw DomainError(kModule, "degradation leaves no usable capacity");
    empty_ = w->first;
    full_ = w->second;
}

double CellModel::ocv(double lithium) const {
    return config_.cathode_ocp((inventory_ - lithium) / cathode_q_) - config_.anode_ocp(lithium / anode_q_);
}

double CellModel::ocv_smeared(double lithium, double sigma_ah) const {
    if (!(sigma_ah > 1e-12)) return ocv(lithium);
    double v = 0.0;
    for (std::size_t i = 0; i < kGhNodes.size(); ++i) v += kGhWeights[i] * ocv(lithium + sigma_ah * kGhNodes[i]);
    return v;
}

// ---------------------------------------------------------------------------
// Charging
// ---------------------------------------------------------------------------

SimulatedCharge simulate_charge(const CellSimConfig& cell, const DegradationState& degradation,
                                const ChargeSimConfig& cfg) {
    if (!(cfg.c_rate > 0.0)) throw DomainError(kModule, "c_rate must be positive");
    if (!(cfg.dt > 0.0)) throw DomainError(kModule, "dt must be positive");
    if (!(cfg.start_soc >= 0.0 && cfg.start_soc < 1.0)) throw DomainError(kModule, "start_soc must lie in [0, 1)");
    if (cell.cells_in_series == 0) throw DomainError(kModule, "a pack needs at least one cell");
    const CellModel model(cell, degradation);
    const double cn = cell.nominal_capacity;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> unit(0.0, 1.0);

    const double tref = cell.reference_temperature + kKelvin;
    auto arrhenius = [&](double temp_c) {
        return std::exp(cell.resistance_activation_k * (1.0 / (temp_c + kKelvin) - 1.0 / tref));
    };

    SimulatedCharge out;
    out.true_capacity = model.capacity();
    out.true_soh = 100.0 * model.capacity() / cn;

    double L = model.lithium_at(cfg.start_soc);
    double temp = cfg.ambient;
    std::vector<double> vrc(cell.rc_pairs.size(), 0.0);
    double t = cfg.start_time;
    double i_prev = 0.0;

    auto terminal = [&](double lithium, double current, const std::vector<double>& v1, double T) {
        const double f = arrhenius(T);
        double v = model.ocv_smeared(lithium, cell.smear_per_c * std::abs(current) * f) +
                   current * cell.series_resistance * f;
        for (double x : v1) v += x;
        return v;
    };
    auto rc_after = [&](double current, double T) {
        std::vector<double> v1(vrc.size());
        const double f = arrhenius(T);
        for (std::size_t j = 0; j < vrc.size(); ++j) {
            const double r = cell.rc_pairs[j].resistance * f;
            const double decay = std::exp(-cfg.dt / (r * cell.rc_pairs[j].capacitance));
            v1[j] = vrc[j] * decay + r * current * (1.0 - decay);
        }
        return v1;
    };
    auto emit = [&](double current, double v_term) {
        std::vector<double> cells(cell.cells_in_series);
        double pack = 0.0;
        for (auto& c : cells) {
            c = v_term + cell.voltage_noise * unit(rng);
            pack += c;
        }
        std::vector<double> temps(cell.temperature_sensors);
        for (auto& x : temps) x = temp + cell.temperature_noise * unit(rng);
        out.samples.push_back(telemetry::TelemetrySample::make(t, current, pack, std::move(cells), std::move(temps)));
        out.true_soc.push_back(100.0 * (L - model.empty_lithium()) / model.capacity());
    };
    auto heat = [&](double current) {
        const double f = arrhenius(temp);
        double p = current * current * cell.series_resistance * f;
        for (std::size_t j = 0; j < vrc.size(); ++j) p += vrc[j] * vrc[j] / (cell.rc_pairs[j].resistance * f);
        temp += cfg.dt / cell.cell_heat_capacity * (p - cell.cell_cooling * (temp - cfg.ambient));
    };
    // Advances one step with current `current` (linear in time from i_prev).
    auto advance = [&](double current) {
        L += 0.5 * (i_prev + current) * cfg.dt / 3600.0;
        vrc = rc_after(current, temp);
        heat(current);
        t += cfg.dt;
        i_prev = current;
    };
    auto rest = [&](double seconds) {
        const auto n = static_cast<long>(std::llround(seconds / cfg.dt));
        for (long k = 0; k < n; ++k) {
            advance(0.0);
            emit(0.0, terminal(L, 0.0, vrc, temp));
        }
    };

    emit(0.0, terminal(L, 0.0, vrc, temp));
    rest(cfg.rest_before_s);
    out.charge_begin = out.samples.size();

    const double vmax = cell.full_charge_voltage;
    const double power = cfg.c_rate * cn * 3.7;
    const double ripple = cell.current_ripple;
    double v_last = terminal(L, 0.0, vrc, temp);
    bool cv = false;
    double cv_time = 0.0;
    const double l_start = L;
    while (true) {
        if (!cv) {
            const double target = cfg.profile == ChargeProfile::cccv ? cfg.c_rate * cn : power / std::max(v_last, 1.0);
            const double current = std::max(0.0, target + ripple * unit(rng));
            const double l_next = L + 0.5 * (i_prev + current) * cfg.dt / 3600.0;
            const double v = terminal(l_next, current, rc_after(current, temp), temp);
            if (v < vmax) {
                advance(current);
                emit(current, v);
                v_last = v;
                continue;
            }
            cv = true;
        }
        // Constant voltage: the current that lands exactly on vmax.
        auto residual = [&](double current) {
            return terminal(L + 0.5 * (i_prev + current) * cfg.dt / 3600.0, current, rc_after(current, temp), temp) - vmax;
        };
        double solved = 0.0;
        if (residual(0.0) < 0.0) {
            double hi = std::max(i_prev, cfg.c_rate * cn) * 2.0 + 1e-3;
            while (residual(hi) < 0.0) hi *= 2.0;
            solved = bisect(residual, 0.0, hi);
        }
        const double current = std::max(0.0, solved + ripple * unit(rng));
        const double taper = cell.taper_current * cn;
        if (solved <= taper || cv_time >= cfg.max_cv_s) {
            // Taper reached: the charger stops with this step.
            if (current > 0.0) {
                advance(current);
                emit(current, terminal(L, current, vrc, temp));
            }
            break;
        }
        advance(current);
        emit(current, terminal(L, current, vrc, temp));
        cv_time += cfg.dt;
    }
    out.charge_end = out.samples.size() - 1;
    // The step back to zero current still moves charge.
    advance(0.0);
    emit(0.0, terminal(L, 0.0, vrc, temp));
    out.delivered = L - l_start;
    rest(cfg.rest_after_s - cfg.dt);

    if (out.charge_end < out.charge_begin) throw DomainError(kModule, "charge ended before it started");
    std::vector<telemetry::TelemetrySample> charging(out.samples.begin() + static_cast<std::ptrdiff_t>(out.charge_begin),
                                                     out.samples.begin() + static_cast<std::ptrdiff_t>(out.charge_end) + 1);
    out.segment = telemetry::ChargeSegment(std::move(charging), cn, out.charge_begin, out.charge_end);
    return out;
}

// ---------------------------------------------------------------------------
// Thermal
// ---------------------------------------------------------------------------

double DutyProfile::at(double t) const {
    if (times.empty() || t < times.front()) return 0.0;
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return watts[static_cast<std::size_t>(it - times.begin()) - 1];
}

double DutyProfile::current_at(double t) const {
    if (times.empty() || currents.size() != times.size() || t < times.front()) return 0.0;
    const auto it = std::upper_bound(times.begin(), times.end(), t);
    return currents[static_cast<std::size_t>(it - times.begin()) - 1];
}

DutyProfile ev_duty(double days, std::uint64_t seed, const DutyConfig& config) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto between = [&](double a, double b) { return a + (b - a) * u(rng); };
    struct Block {
        double start, end, watts, amps;
    };
    std::vector<Block> blocks;
    const auto whole = static_cast<int>(std::ceil(days));
    for (int d = 0; d < whole; ++d) {
        const double base = 86400.0 * d;
        const double m0 = base + between(7.0, 8.0) * 3600.0;
        blocks.push_back({m0, m0 + between(25.0, 60.0) * 60.0, config.drive_power * between(0.8, 1.2), -40.0});
        if (u(rng) < 0.3) {
            const double n0 = base + between(11.5, 13.5) * 3600.0;
            blocks.push_back({n0, n0 + between(20.0, 40.0) * 60.0, config.drive_power * between(0.7, 1.1), -30.0});
        }
        const double e0 = base + between(16.75, 18.25) * 3600.0;
        const double e1 = e0 + between(25.0, 60.0) * 60.0;
        blocks.push_back({e0, e1, config.drive_power * between(0.8, 1.2), -40.0});
        const double c0 = e1 + between(15.0, 45.0) * 60.0;
        blocks.push_back({c0, c0 + between(1.5, 3.0) * 3600.0, config.charge_power, 10.0});
    }
    DutyProfile p;
    p.times.push_back(0.0);
    p.watts.push_back(0.0);
    p.currents.push_back(0.0);
    for (const auto& b : blocks) {
        if (b.start < p.times.back()) continue;
        p.times.push_back(b.start);
        p.watts.push_back(b.watts);
        p.currents.push_back(b.amps);
        p.times.push_back(b.end);
        p.watts.push_back(0.0);
        p.currents.push_back(0.0);
    }
    return p;
}

const char* to_string(FaultKind k) {
    switch (k) {
    case FaultKind::none: return "none";
    case FaultKind::drift: return "drift";
    case FaultKind::step: return "step";
    case FaultKind::runaway_seed: return "runaway-seed";
    case FaultKind::sensor_stuck: return "sensor-stuck";
    }
    return "none";
}

FaultKind fault_kind_from_string(const std::string& s) {
    for (auto k : {FaultKind::none, FaultKind::drift, FaultKind::step, FaultKind::runaway_seed, FaultKind::sensor_stuck})
        if (s == to_string(k)) return k;
    throw DomainError(kModule, "unknown fault kind '" + s + "'");
}

ThermalTrace simulate_thermal(const ThermalSimConfig& c, const DutyProfile& duty, const FaultSpec& fault,
                              double horizon_s, double dt) {
    if (c.sensors == 0) throw DomainError(kModule, "at least one sensor is required");
    if (!(dt > 0.0) || !(horizon_s >= 0.0)) throw DomainError(kModule, "dt must be positive and the horizon non-negative");
    if (!(c.lumped_heat_capacity > 0.0) || !(c.cooling_coefficient >= 0.0))
        throw DomainError(kModule, "heat capacity must be positive and cooling non-negative");
    if (fault.kind != FaultKind::none &&
        (fault.onset < 0.0 || fault.onset > horizon_s || fault.sensor < 0 || static_cast<std::size_t>(fault.sensor) >= c.sensors))
        throw DomainError(kModule, "fault onset or sensor outside the simulation");

    const std::size_t S = c.sensors;
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> spread(1.0 - c.node_variation, 1.0 + c.node_variation);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> cap(S), cool(S), share(S);
    for (std::size_t i = 0; i < S; ++i) {
        cap[i] = c.lumped_heat_capacity * spread(rng);
        cool[i] = c.cooling_coefficient * spread(rng);
        share[i] = spread(rng);
        if (!(dt * cool[i] / cap[i] < 1.0))
            throw StepSizeError(kModule, "time step too large for the explicit integrator (dt*h/C >= 1)");
    }

    auto coolant = [&](double t) {
        const double tod = std::fmod(c.start_time + t, 86400.0);
        return c.coolant_temperature + c.coolant_amplitude * std::cos(2.0 * M_PI * (tod - c.coolant_peak_s) / 86400.0);
    };

    ThermalTrace tr;
    tr.generated.assign(S, 0.0);
    tr.cooled.assign(S, 0.0);
    tr.heat_capacity = cap;
    const auto steps = static_cast<std::size_t>(std::floor(horizon_s / dt + 1e-9)) + 1;
    tr.timestamps.reserve(steps);
    tr.readings.reserve(steps);
    tr.truth.reserve(steps);

    std::vector<double> T(S, c.initial_temperature);
    double stuck_value = 0.0;
    bool stuck_set = false;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = dt * static_cast<double>(k);
        tr.timestamps.push_back(c.start_time + t);
        tr.truth.push_back(T);
        std::vector<double> r(S);
        for (std::size_t i = 0; i < S; ++i) r[i] = T[i] + c.sensor_noise * noise(rng);
        if (fault.kind != FaultKind::none && t >= fault.onset) {
            auto& x = r[static_cast<std::size_t>(fault.sensor)];
            switch (fault.kind) {
            case FaultKind::drift: x += fault.magnitude * (t - fault.onset) / 3600.0; break;
            case FaultKind::step: x += fault.magnitude; break;
            case FaultKind::sensor_stuck:
                if (!stuck_set) {
                    stuck_value = x;
                    stuck_set = true;
                }
                x = stuck_value;
                break;
            default: break;
            }
        }
        tr.readings.push_back(std::move(r));
        if (k + 1 == steps) break;

        const double p = duty.at(t);
        const double tc = coolant(t);
        for (std::size_t i = 0; i < S; ++i) {
            double gen = share[i] * p;
            if (fault.kind == FaultKind::runaway_seed && static_cast<int>(i) == fault.sensor && t >= fault.onset) {
                const double mult = fault.magnitude * (t - fault.onset) / 3600.0;
                gen += std::min(c.max_fault_power,
                                mult * c.arrhenius_prefactor * std::exp(-c.activation_temperature / (T[i] + kKelvin)));
            }
            const double loss = cool[i] * (T[i] - tc);
            T[i] += dt / cap[i] * (gen - loss);
            tr.generated[i] += dt * gen;
            tr.cooled[i] += dt * loss;
            if (!std::isfinite(T[i])) throw StepSizeError(kModule, "thermal integration diverged");
        }
    }
    return tr;
}

std::optional<double> first_crossing(const ThermalTrace& trace, int sensor, double threshold, bool use_readings) {
    const auto& rows = use_readings ? trace.readings : trace.truth;
    for (std::size_t k = 0; k < rows.size(); ++k)
        if (rows[k].at(static_cast<std::size_t>(sensor)) >= threshold) return trace.timestamps[k];
    return std::nullopt;
}

std::vector<telemetry::TelemetrySample> thermal_samples(const ThermalTrace& trace, const DutyProfile& duty) {
    std::vector<telemetry::TelemetrySample> out;
    out.reserve(trace.timestamps.size());
    const double t0 = trace.timestamps.empty() ? 0.0 : trace.timestamps.front();
    for (std::size_t k = 0; k < trace.timestamps.size(); ++k) {
        const double rel = trace.timestamps[k] - t0;
        const double i = duty.current_at(rel);
        const double v = 3.75 - 0.0005 * i;
        std::vector<double> cells(4, v);
        out.push_back(telemetry::TelemetrySample::make(trace.timestamps[k], i, 4.0 * v, std::move(cells), trace.readings[k]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Fleet emission
// ---------------------------------------------------------------------------

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt_temp(double t) {
    std::ostringstream s;
    s << "T" << static_cast<long>(std::lround(t));
    return s.str();
}

void apply_cell_overrides(CellSimConfig& c, const json& j) {
    c.nominal_capacity = j.value("nominal_capacity", c.nominal_capacity);
    c.series_resistance = j.value("series_resistance", c.series_resistance);
    c.smear_per_c = j.value("smear_per_c", c.smear_per_c);
    c.taper_current = j.value("taper_current", c.taper_current);
    c.cells_in_series = j.value("cells_in_series", c.cells_in_series);
    c.temperature_sensors = j.value("temperature_sensors", c.temperature_sensors);
    c.voltage_noise = j.value("voltage_noise", c.voltage_noise);
    c.temperature_noise = j.value("temperature_noise", c.temperature_noise);
    c.current_ripple = j.value("current_ripple", c.current_ripple);
    if (j.value("cathode", std::string("nmc")) == "lfp") {
        c.cathode_ocp = lfp_ocp();
        c.empty_voltage = j.value("empty_voltage", 2.5);
        c.full_charge_voltage = j.value("full_charge_voltage", 3.65);
    } else {
        c.empty_voltage = j.value("empty_voltage", c.empty_voltage);
        c.full_charge_voltage = j.value("full_charge_voltage", c.full_charge_voltage);
    }
}

struct ChargeJob {
    std::string id, group;
    double temperature = 25.0, c_rate = 0.5, dt = 1.0, start_soc = 0.0;
    DegradationState deg;
    ChargeProfile profile = ChargeProfile::cccv;
};

ChargeProfile profile_from(const std::string& s) {
    if (s == "cccv") return ChargeProfile::cccv;
    if (s == "constant_power" || s == "ac") return ChargeProfile::constant_power;
    throw DomainError(kModule, "unknown charge profile '" + s + "'");
}

const char* profile_name(ChargeProfile p) { return p == ChargeProfile::cccv ? "cccv" : "constant_power"; }

std::vector<ChargeJob> expand_charges(const json& sc) {
    std::vector<ChargeJob> jobs;
    for (const auto& c : sc.value("charges", json::array())) {
        ChargeJob j;
        j.id = c.at("id").get<std::string>();
        j.temperature = c.value("temperature", 25.0);
        j.group = c.value("group", fmt_temp(j.temperature));
        j.c_rate = c.value("c_rate", 0.5);
        j.dt = c.value("dt", 1.0);
        j.start_soc = c.value("start_soc", 0.0);
        j.deg = {c.value("lli", 0.0), c.value("lam_a", 0.0), c.value("lam_c", 0.0)};
        j.profile = profile_from(c.value("profile", std::string("cccv")));
        jobs.push_back(j);
    }
    for (const auto& g : sc.value("charge_grid", json::array())) {
        const std::string prefix = g.value("prefix", std::string("chg"));
        const auto temps = g.value("temperatures", std::vector<double>{25.0});
        const auto rates = g.value("c_rates", std::vector<double>{0.5});
        const auto socs = g.value("start_socs", std::vector<double>{0.0});
        const auto llis = g.value("lli", std::vector<double>{0.0});
        const auto lam_a = g.value("lam_a", 0.0);
        const auto lam_c = g.value("lam_c", 0.0);
        const auto repeats = g.value("repeats", 1);
        const double dt = g.value("dt", 1.0);
        const auto profile = profile_from(g.value("profile", std::string("cccv")));
        std::size_t n = 0;
        for (double T : temps)
            for (double r : rates)
                for (double s0 : socs)
                    for (double l : llis)
                        for (int rep = 0; rep < repeats; ++rep) {
                            ChargeJob j;
                            j.id = prefix + "_" + std::to_string(n++);
                            j.temperature = T;
                            j.group = fmt_temp(T);
                            j.c_rate = r;
                            j.dt = dt;
                            j.start_soc = s0;
                            j.deg = {l, lam_a, lam_c};
                            j.profile = profile;
                            jobs.push_back(j);
                        }
    }
    return jobs;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write " + path.string());
    out << text;
    if (!out) throw IoError(kModule, "write failed for " + path.string());
}

std::string num(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

} // namespace

std::vector<std::string> emit_fleet(const std::string& scenario_json, const std::string& output_dir) {
    const json sc = json::parse(scenario_json, nullptr, false);
    if (sc.is_discarded() || !sc.is_object()) throw DomainError(kModule, "scenario is not a JSON object");
    const auto seed = sc.value("seed", std::uint64_t{1});
    CellSimConfig cell;
    if (sc.contains("cell")) apply_cell_overrides(cell, sc["cell"]);

    std::vector<ChargeJob> jobs;
    try {
        jobs = expand_charges(sc);
    } catch (const json::exception& e) {
        throw DomainError(kModule, std::string("malformed scenario: ") + e.what());
    }
    const auto packs = sc.value("packs", json::array());
    std::vector<std::string> written;
    if (jobs.empty() && packs.empty()) return written;

    const fs::path root(output_dir);
    try {
        fs::create_directories(root / "truth");
    } catch (const fs::filesystem_error& e) {
        throw IoError(kModule, std::string("cannot create output directory: ") + e.what());
    }

    json truth;
    truth["format"] = "battkit.ground_truth";
    truth["version"] = 1;
    truth["seed"] = seed;
    truth["nominal_capacity_ah"] = cell.nominal_capacity;
    truth["charges"] = json::array();
    truth["packs"] = json::array();

    std::set<std::string> ids;
    for (std::size_t n = 0; n < jobs.size(); ++n) {
        const auto& j = jobs[n];
        if (!ids.insert(j.id).second) throw DomainError(kModule, "duplicate id '" + j.id + "' in scenario");
        ChargeSimConfig cfg;
        cfg.c_rate = j.c_rate;
        cfg.dt = j.dt;
        cfg.ambient = j.temperature;
        cfg.start_soc = j.start_soc;
        cfg.profile = j.profile;
        cfg.seed = derive_seed(seed, 1, n);
        cfg.start_time += 86400.0 * static_cast<double>(n);
        const auto sim = simulate_charge(cell, j.deg, cfg);

        const fs::path dir = root / j.group;
        try {
            fs::create_directories(dir);
        } catch (const fs::filesystem_error& e) {
            throw IoError(kModule, std::string("cannot create output directory: ") + e.what());
        }
        const std::string rel = j.group + "/" + j.id + ".csv";
        telemetry::write_file((root / rel).string(), sim.samples);
        written.push_back(rel);

        std::string soc = "timestamp,true_soc\n";
        for (std::size_t k = 0; k < sim.samples.size(); ++k)
            soc += num(sim.samples[k].timestamp) + "," + num(sim.true_soc[k]) + "\n";
        const std::string soc_rel = "truth/" + j.id + ".soc.csv";
        write_text(root / soc_rel, soc);
        written.push_back(soc_rel);

        truth["charges"].push_back({{"id", j.id},
                                    {"file", rel},
                                    {"soc_file", soc_rel},
                                    {"temperature", j.temperature},
                                    {"c_rate", j.c_rate},
                                    {"profile", profile_name(j.profile)},
                                    {"start_soc", j.start_soc},
                                    {"lli", j.deg.lli},
                                    {"lam_a", j.deg.lam_a},
                                    {"lam_c", j.deg.lam_c},
                                    {"true_capacity_ah", sim.true_capacity},
                                    {"true_soh", sim.true_soh},
                                    {"delivered_ah", sim.delivered},
                                    {"charge_begin", sim.charge_begin},
                                    {"charge_end", sim.charge_end}});
    }

    for (std::size_t n = 0; n < packs.size(); ++n) {
        const auto& p = packs[n];
        try {
            const std::string id = p.at("id").get<std::string>();
            if (!ids.insert(id).second) throw DomainError(kModule, "duplicate id '" + id + "' in scenario");
            ThermalSimConfig tc;
            tc.sensors = p.value("sensors", tc.sensors);
            tc.coolant_temperature = p.value("coolant_temperature", tc.coolant_temperature);
            tc.coolant_amplitude = p.value("coolant_amplitude", tc.coolant_amplitude);
            tc.initial_temperature = p.value("initial_temperature", tc.coolant_temperature);
            tc.seed = derive_seed(seed, 2, n);
            const double days = p.value("days", 1.0);
            const double dt = p.value("dt", 60.0);
            const auto duty = ev_duty(days, derive_seed(seed, 3, n));
            FaultSpec fault;
            if (p.contains("fault")) {
                const auto& f = p["fault"];
                fault.kind = fault_kind_from_string(f.value("kind", std::string("none")));
                fault.onset = f.value("onset_s", 0.0);
                fault.magnitude = f.value("magnitude", 0.0);
                fault.sensor = f.value("sensor", 0);
            }
            const auto trace = simulate_thermal(tc, duty, fault, days * 86400.0, dt);
            const std::string rel = "thermal/" + id + ".csv";
            fs::create_directories(root / "thermal");
            telemetry::write_file((root / rel).string(), thermal_samples(trace, duty));
            written.push_back(rel);

            json entry{{"id", id}, {"file", rel}, {"sensors", tc.sensors}, {"days", days}, {"dt", dt}};
            json fj{{"kind", to_string(fault.kind)},
                    {"onset_s", fault.onset},
                    {"onset_timestamp", tc.start_time + fault.onset},
                    {"magnitude", fault.magnitude},
                    {"sensor", fault.sensor}};
            entry["fault"] = fj;
            const auto cross = fault.kind == FaultKind::none ? std::nullopt : first_crossing(trace, fault.sensor, 55.0);
            entry["crossing_55_timestamp"] = cross ? json(*cross) : json(nullptr);
            truth["packs"].push_back(entry);
        } catch (const json::exception& e) {
            throw DomainError(kModule, std::string("malformed pack entry: ") + e.what());
        } catch (const fs::filesystem_error& e) {
            throw IoError(kModule, std::string("cannot create output directory: ") + e.what());
        }
    }

    write_text(root / "truth" / "ground_truth.json", truth.dump(1) + "\n");
    written.push_back("truth/ground_truth.json");
    std::sort(written.begin(), written.end());
    return written;
}

} // namespace battkit::synth
