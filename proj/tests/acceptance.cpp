// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include "battkit/kshape.hpp"
#include "battkit/network.hpp"
#include "battkit/sbd.hpp"
#include "battkit/soc.hpp"
#include "battkit/soh.hpp"
#include "battkit/synth.hpp"
#include "battkit/thermal.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

using namespace battkit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// SOC

std::vector<soc::LabeledRow> labeled(const synth::SimulatedCharge& s, const soc::WindowConfig& w) {
    const auto rows = soc::build_features(s.segment, w);
    std::vector<double> t;
    for (const auto& x : s.segment.samples()) t.push_back(x.timestamp);
    const auto first = s.true_soc.begin() + static_cast<std::ptrdiff_t>(s.charge_begin);
    std::vector<double> z(first, first + static_cast<std::ptrdiff_t>(t.size()));
    return soc::label_rows(rows, t, z);
}

struct SocRun {
    soc::SocNetwork net;
    soc::EvalReport held_out;
    soc::EvalReport ac;
    std::size_t train_rows = 0;
    double seconds = 0.0;
};

SocRun soc_run() {
    const auto t0 = std::chrono::steady_clock::now();
    synth::CellSimConfig cell;
    soc::LmConfig lm;
    lm.window.dt_s = 30.0;
    lm.max_epochs = 200;
    lm.full_charge = soc::FullChargeRule{4.15, 0.05, cell.nominal_capacity};
    const std::vector<double> temps{-10.0, 0.0, 25.0, 40.0, 50.0};

    std::vector<soc::LabeledRow> train;
    std::uint64_t seed = 1;
    for (double T : temps)
        for (double c : {0.2, 0.35, 0.5, 0.75, 1.0})
            for (double s0 : {0.0, 0.25, 0.5}) {
                synth::ChargeSimConfig cfg;
                cfg.ambient = T;
                cfg.c_rate = c;
                cfg.start_soc = s0;
                cfg.seed = seed++;
                cfg.dt = 5.0;
                auto r = labeled(synth::simulate_charge(cell, {}, cfg), lm.window);
                train.insert(train.end(), r.begin(), r.end());
            }
    auto [net, report] = soc::train(train, soc::SplitConfig{}, lm);

    // Held-out charges: rates and start points never seen in training.
    std::vector<soc::LabeledRow> held, ac;
    for (double T : temps)
        for (double c : {0.3, 0.6, 0.9}) {
            synth::ChargeSimConfig cfg;
            cfg.ambient = T;
            cfg.c_rate = c;
            cfg.start_soc = 0.15;
            cfg.seed = 1000 + seed++;
            cfg.dt = 5.0;
            auto r = labeled(synth::simulate_charge(cell, {}, cfg), lm.window);
            held.insert(held.end(), r.begin(), r.end());
        }
    // AC-style: low, roughly constant-power charging.
    for (double T : {0.0, 25.0, 40.0})
        for (double c : {0.15, 0.2}) {
            synth::ChargeSimConfig cfg;
            cfg.ambient = T;
            cfg.c_rate = c;
            cfg.start_soc = 0.2;
            cfg.seed = 2000 + seed++;
            cfg.dt = 5.0;
            cfg.profile = synth::ChargeProfile::constant_power;
            auto r = labeled(synth::simulate_charge(cell, {}, cfg), lm.window);
            ac.insert(ac.end(), r.begin(), r.end());
        }
    SocRun out;
    out.held_out = soc::evaluate(net, held);
    out.ac = soc::evaluate(net, ac);
    out.train_rows = train.size();
    out.net = std::move(net);
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

// ---------------------------------------------------------------------------
// LM

double jacobian_error(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> width(1, 12), depth(1, 3), act(0, 2);
    std::vector<std::size_t> sizes{static_cast<std::size_t>(width(rng))};
    const int d = depth(rng);
    for (int i = 0; i < d; ++i) sizes.push_back(static_cast<std::size_t>(width(rng)));
    sizes.push_back(1);
    soc::SocNetwork net(sizes, static_cast<soc::Activation>(act(rng)));
    soc::randomize(net, rng());
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd X(static_cast<Eigen::Index>(sizes.front()), 10);
    for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = g(rng);
    Eigen::MatrixXd J;
    net.forward_batch(X, &J);
    const Eigen::VectorXd theta = net.parameters();
    double worst = 0.0;
    for (Eigen::Index p = 0; p < theta.size(); ++p) {
        const double h = 1e-6 * std::max(1.0, std::abs(theta[p]));
        Eigen::VectorXd tp = theta, tm = theta;
        tp[p] += h;
        tm[p] -= h;
        net.set_parameters(tp);
        const Eigen::VectorXd fp = net.forward_batch(X);
        net.set_parameters(tm);
        const Eigen::VectorXd fm = net.forward_batch(X);
        for (Eigen::Index s = 0; s < fp.size(); ++s) {
            const double fd = (fp[s] - fm[s]) / (2.0 * h);
            // Relative error with a floor so vanishing derivatives do not
            // turn rounding noise into a failure.
            const double denom = std::max({std::abs(fd), std::abs(J(s, p)), 1e-3});
            worst = std::max(worst, std::abs(fd - J(s, p)) / denom);
        }
    }
    return worst;
}

Outcome lm_correctness() {
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    for (int c = 0; c < 20; ++c) worst = std::max(worst, jacobian_error(rng));

    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<soc::LabeledRow> data;
    for (int i = 0; i < 400; ++i) {
        soc::LabeledRow r;
        r.features = {u(rng), u(rng), u(rng)};
        r.target = 50.0 + 30.0 * std::tanh(1.5 * r.features[0] - r.features[1]) + 10.0 * r.features[2] * r.features[2];
        data.push_back(r);
    }
    int monotone = 0;
    std::size_t steps = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        soc::LmConfig lm;
        lm.hidden = {8, 4};
        lm.max_epochs = 80;
        lm.seed = seed;
        soc::SplitConfig split;
        split.seed = seed;
        auto [net, rep] = soc::train(data, split, lm);
        bool ok = rep.loss_history.size() >= 2;
        for (std::size_t k = 1; k < rep.loss_history.size(); ++k) ok = ok && rep.loss_history[k] <= rep.loss_history[k - 1];
        monotone += ok;
        steps += rep.loss_history.size() - 1;
    }
    return {worst < 1e-4 && monotone == 10,
            fmt("max Jacobian relative error %.2e over 20 networks (< 1e-4); loss non-increasing in %d/10 runs "
                "(%zu accepted steps)",
                worst, monotone, steps)};
}

// ---------------------------------------------------------------------------
// SOH

Outcome soh_accuracy() {
    const auto t0 = std::chrono::steady_clock::now();
    synth::CellSimConfig cell;
    const auto fc = soh::FeatureConfig::defaults();
    std::vector<soh::CalibrationSample> cal;
    std::uint64_t seed = 1;
    for (double T : {10.0, 25.0, 40.0})
        for (int i = 0; i <= 6; ++i) {
            synth::ChargeSimConfig c;
            c.ambient = T;
            c.c_rate = 1.0 / 3.0;
            c.start_soc = 0.05;
            c.seed = seed++;
            c.dt = 2.0;
            const auto s = synth::simulate_charge(cell, {0.035 * i, 0.0, 0.0}, c);
            const auto f = soh::extract_features(soh::differential_curves(s.segment, {}), fc);
            cal.push_back({f, s.true_soh, T});
        }
    const auto lut = soh::build_lut(cal, fc, {});

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int within = 0, accepted = 0, gated = 0;
    double worst = 0.0, soh_lo = 200.0, soh_hi = 0.0;
    for (int k = 0; k < 120; ++k) {
        const double T = std::vector<double>{10.0, 25.0, 40.0}[k % 3];
        const double rate = (k / 3) % 2 ? 0.5 : 1.0 / 3.0;
        const double lli = 0.21 * u(rng), lam = 0.03 * u(rng);
        synth::ChargeSimConfig c;
        c.ambient = T;
        c.c_rate = rate;
        c.start_soc = 0.05 + 0.1 * u(rng);
        c.seed = 1000 + static_cast<std::uint64_t>(k);
        c.dt = 2.0;
        const auto s = synth::simulate_charge(cell, {lli, lam, 0.0}, c);
        soh_lo = std::min(soh_lo, s.true_soh);
        soh_hi = std::max(soh_hi, s.true_soh);
        if (!soh::gate_segment(s.segment, {}).accepted) {
            ++gated;
            continue;
        }
        ++accepted;
        try {
            const auto f = soh::extract_features(soh::differential_curves(s.segment, {}), lut.features);
            const double err = std::abs(soh::estimate_soh(f, lut).soh_c - s.true_soh);
            worst = std::max(worst, err);
            within += err <= 5.0;
        } catch (const std::exception&) {
            worst = std::max(worst, 100.0);  // a failed estimate counts as a miss
        }
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double frac = accepted ? static_cast<double>(within) / accepted : 0.0;
    return {accepted > 0 && frac >= 0.95 && secs < 300.0,
            fmt("%d/%d gated-in segments within 5 points (%.1f%%, need >= 95%%), worst %.2f, true SOH %.1f..%.1f, "
                "%d refused by the gate, %.1f s",
                within, accepted, 100.0 * frac, worst, soh_lo, soh_hi, gated, secs)};
}

Outcome differential_identities() {
    double recip = 0.0, charge = 0.0, linear = 0.0;
    std::size_t checked = 0;
    synth::CellSimConfig cell;
    int n = 0;
    for (double rate : {0.1, 1.0 / 3.0, 0.5})
        for (double lli : {0.0, 0.1, 0.2}) {
            synth::ChargeSimConfig c;
            c.c_rate = rate;
            c.start_soc = 0.05;
            c.dt = rate < 0.2 ? 10.0 : 2.0;
            c.seed = static_cast<std::uint64_t>(++n);
            const auto s = synth::simulate_charge(cell, {lli, 0.0, 0.0}, c);
            const auto cv = soh::differential_curves(s.segment, {});
            for (std::size_t j = 0; j < cv.size(); ++j)
                if (!cv.ic_mask[j]) {
                    recip = std::max(recip, std::abs(cv.ic[j] * cv.dv[j] - 1.0));
                    ++checked;
                }
            charge = std::max(charge, std::abs(soh::integrate_ic(cv) - cv.cc_charge_ah) / cv.cc_charge_ah);
        }
    for (double slope : {0.2, 0.4, 0.9}) {
        std::vector<double> t, i, v;
        for (double sec = 0; sec <= 3 * 3600; sec += 1) {
            t.push_back(sec);
            i.push_back(1.0);
            v.push_back(3.0 + slope * sec / 3600.0);
        }
        const auto cv = soh::differential_curves(t, i, v, 3.0, 25.0, {});
        for (std::size_t j = 0; j < cv.size(); ++j) {
            linear = std::max(linear, std::abs(cv.dv[j] - slope));
            linear = std::max(linear, std::abs(cv.ic[j] - 1.0 / slope));
        }
    }
    return {recip < 1e-6 && charge < 0.02 && linear < 1e-9,
            fmt("max |ic*dv - 1| %.1e over %zu bins (< 1e-6); max IC charge error %.2f%% (< 2%%); linear case "
                "error %.1e (< 1e-9)",
                recip, checked, 100.0 * charge, linear)};
}

// ---------------------------------------------------------------------------
// SBD

double brute_distance(std::vector<double> x, std::vector<double> y) {
    auto norm = [](std::vector<double>& v) {
        double m = 0.0;
        for (double a : v) m += a;
        m /= static_cast<double>(v.size());
        double e = 0.0;
        for (double& a : v) {
            a -= m;
            e += a * a;
        }
        e = std::sqrt(e);
        for (double& a : v) a /= e;
    };
    norm(x);
    norm(y);
    const int n = static_cast<int>(x.size());
    double best = -2.0;
    for (int w = -(n - 1); w <= n - 1; ++w) {
        double cc = 0.0;
        for (int i = 0; i < n; ++i)
            if (i + w >= 0 && i + w < n) cc += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + w)];
        best = std::max(best, cc);
    }
    return 1.0 - best;
}

Outcome sbd_equivalence() {
    std::mt19937_64 rng(77);
    std::normal_distribution<double> g(0.0, 1.0);
    auto series = [&](std::size_t n) {
        std::vector<double> v(n);
        for (auto& a : v) a = g(rng);
        return v;
    };
    double oracle = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto x = series(60), y = series(60);
        oracle = std::max(oracle, std::abs(thermal::sbd(x, y).distance - brute_distance(x, y)));
    }
    int props = 0;
    std::uniform_real_distribution<double> scale(0.05, 20.0), offset(-100.0, 100.0);
    std::uniform_int_distribution<int> shift(-20, 20);
    for (int k = 0; k < 1000; ++k) {
        const auto x = series(60), y = series(60);
        const double d = thermal::sbd(x, y).distance;
        bool ok = d >= 0.0 && d <= 2.0;
        ok = ok && std::abs(d - thermal::sbd(y, x).distance) < 1e-12;
        auto y2 = y;
        const double a = scale(rng), b = offset(rng);
        for (auto& v : y2) v = a * v + b;
        ok = ok && std::abs(d - thermal::sbd(x, y2).distance) < 1e-9;
        // A bump moved by s samples is recovered at shift s.
        const int s = shift(rng);
        const double c = 30.0 + 0.5 * g(rng);
        std::vector<double> p(60), q(60);
        for (int i = 0; i < 60; ++i) {
            p[static_cast<std::size_t>(i)] = std::exp(-0.5 * std::pow((i - c) / 3.0, 2));
            q[static_cast<std::size_t>(i)] = std::exp(-0.5 * std::pow((i - c - s) / 3.0, 2));
        }
        ok = ok && thermal::sbd(p, q).shift == s;
        props += ok;
    }
    return {oracle < 1e-9 && props == 1000,
            fmt("max |fast - exhaustive| %.1e over 1000 pairs (< 1e-9); range, symmetry, scale/offset invariance and "
                "shift recovery held in %d/1000 trials",
                oracle, props)};
}

// ---------------------------------------------------------------------------
// Thermal detection

struct DetectionRun {
    std::optional<double> detected;  // seconds from start
    bool isolated = false;
    int early_triggers = 0;
    std::optional<double> crossing;
};

DetectionRun detection_run(const synth::ThermalSimConfig& tc, const synth::DutyProfile& duty, const synth::FaultSpec& f,
                           double horizon) {
    const auto trace = synth::simulate_thermal(tc, duty, f, horizon, 10.0);
    const auto samples = synth::thermal_samples(trace, duty);
    telemetry::WindowConfig wc;
    wc.dt = 60.0;
    const auto windows = telemetry::window_signals(samples, telemetry::SensorSelector{}, 60, 15, wc);
    thermal::ShapeClusterState st;
    const thermal::Thresholds th;
    DetectionRun run;
    const bool faulted = f.kind != synth::FaultKind::none;
    for (const auto& b : thermal::batches_by_origin(windows)) {
        auto res = thermal::detect(b, st, th);
        st = std::move(res.state);
        if (!res.verdict.triggered) continue;
        const double t = res.verdict.window_end - tc.start_time;
        if (!faulted || t < f.onset) {
            ++run.early_triggers;
        } else if (!run.detected) {
            run.detected = t;
            const auto& o = res.verdict.offending_sensors;
            run.isolated = std::find(o.begin(), o.end(), f.sensor) != o.end();
        }
    }
    if (faulted)
        if (auto c = synth::first_crossing(trace, f.sensor, 55.0)) run.crossing = *c - tc.start_time;
    return run;
}

Outcome early_detection() {
    const auto t0 = std::chrono::steady_clock::now();
    const double days = 3.0;
    int early_enough = 0, isolated = 0, pre_onset = 0;
    double min_lead = 1e9, sum_lead = 0.0;
    for (int r = 0; r < 20; ++r) {
        synth::ThermalSimConfig tc;
        tc.seed = 100 + static_cast<std::uint64_t>(r);
        const auto duty = synth::ev_duty(days, 500 + static_cast<std::uint64_t>(r));
        synth::FaultSpec f;
        f.kind = synth::FaultKind::runaway_seed;
        f.magnitude = 2.0;
        f.sensor = r % 16;
        f.onset = 86400.0 * (days - 1.5) + 3600.0 * (r % 12);
        const auto run = detection_run(tc, duty, f, days * 86400.0);
        pre_onset += run.early_triggers;
        if (!run.detected || !run.crossing) {
            min_lead = std::min(min_lead, -1.0);
            continue;
        }
        const double lead = (*run.crossing - *run.detected) / 60.0;
        min_lead = std::min(min_lead, lead);
        sum_lead += lead;
        if (lead >= 60.0 && run.isolated) ++early_enough;
        isolated += run.isolated;
    }

    synth::ThermalSimConfig nominal;
    nominal.seed = 900;
    const auto duty = synth::ev_duty(30.0, 901);
    const auto quiet = detection_run(nominal, duty, synth::FaultSpec{}, 30.0 * 86400.0);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {early_enough >= 18 && quiet.early_triggers <= 1 && secs < 600.0,
            fmt("%d/20 runs flagged the faulty sensor >= 60 min before 55 degC (need 18; mean lead %.0f min, min %.0f); "
                "%d false triggers in 30 nominal days (<= 1); %d triggers before onset in fault runs; %.1f s",
                early_enough, sum_lead / 20.0, min_lead, quiet.early_triggers, pre_onset, secs)};
}

Outcome thermal_physics() {
    synth::ThermalSimConfig c;
    c.sensors = 4;
    c.node_variation = 0.0;
    c.coolant_amplitude = 0.0;
    c.coolant_temperature = 20.0;
    c.sensor_noise = 0.0;
    synth::DutyProfile off{{0.0}, {0.0}, {0.0}}, on{{0.0}, {8.0}, {0.0}};
    const double tau = c.lumped_heat_capacity / c.cooling_coefficient;

    c.initial_temperature = 45.0;
    const auto decay = synth::simulate_thermal(c, off, {}, 4.0 * 3600.0, 0.5);
    double decay_err = 0.0;
    for (std::size_t k = 0; k < decay.timestamps.size(); ++k) {
        const double t = decay.timestamps[k] - c.start_time;
        const double excess = 25.0 * std::exp(-t / tau);
        decay_err = std::max(decay_err, std::abs(decay.truth[k][0] - 20.0 - excess) / excess);
    }
    c.initial_temperature = 20.0;
    const auto steady = synth::simulate_thermal(c, on, {}, 20.0 * 3600.0, 5.0);
    const double target = 20.0 + 8.0 / c.cooling_coefficient;
    double steady_err = 0.0;
    for (double T : steady.truth.back()) steady_err = std::max(steady_err, std::abs(T - target) / target);

    synth::ThermalSimConfig full;
    const auto duty = synth::ev_duty(2.0, 3);
    const auto tr = synth::simulate_thermal(full, duty, {synth::FaultKind::runaway_seed, 86400.0, 2.0, 5}, 2 * 86400.0, 10.0);
    double balance = 0.0;
    for (std::size_t i = 0; i < full.sensors; ++i) {
        const double stored = tr.heat_capacity[i] * (tr.truth.back()[i] - tr.truth.front()[i]);
        const double net = tr.generated[i] - tr.cooled[i];
        const double scale = std::max(std::abs(net), tr.generated[i]);
        balance = std::max(balance, std::abs(stored - net) / scale);
    }
    return {decay_err < 1e-3 && steady_err < 1e-3 && balance < 1e-3,
            fmt("decay error %.2e, steady-state error %.2e, energy balance error %.2e (all < 1e-3)", decay_err,
                steady_err, balance)};
}

// ---------------------------------------------------------------------------
// Determinism through the command line

int cli(const std::string& args, const fs::path& log) {
    const std::string cmd = std::string("\"") + BATTKIT_CLI + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().filename() == "log.txt") continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), dir).string()] = ss.str();
    }
    return files;
}

// Every command, with every artifact written under `dir`. Returns the number
// of commands that did not exit as expected.
int pipelines(const fs::path& dir) {
    fs::remove_all(dir);
    fs::create_directories(dir);
    const auto log = dir / "log.txt";
    auto p = [&](const std::string& rel) { return "\"" + (dir / rel).string() + "\""; };
    std::ofstream(dir / "soc.json") << R"({"seed": 4, "charge_grid": [{"prefix": "s", "temperatures": [0, 25, 45],
        "c_rates": [0.3, 0.8], "start_socs": [0.1], "dt": 10}]})";
    std::ofstream(dir / "soh.json") << R"({"seed": 5, "charge_grid": [{"prefix": "c", "temperatures": [25],
        "c_rates": [0.3333], "start_socs": [0.05], "lli": [0, 0.05, 0.1, 0.15, 0.2], "dt": 5}]})";
    std::ofstream(dir / "probe.json") << R"({"seed": 8,
        "charges": [{"id": "probe", "c_rate": 0.5, "start_soc": 0.1, "lli": 0.08, "dt": 5},
                    {"id": "fast", "c_rate": 2.0, "start_soc": 0.1, "dt": 2}]})";
    std::ofstream(dir / "thermal.json") << R"({"seed": 6, "packs": [{"id": "pack", "sensors": 8, "days": 2, "dt": 60,
        "fault": {"kind": "runaway-seed", "onset_s": 100000, "magnitude": 2.0, "sensor": 3}}]})";

    int bad = 0;
    auto expect = [&](const std::string& args, int code) { bad += cli(args, log) != code; };
    expect("synth --scenario " + p("soc.json") + " --out " + p("soc_data"), 0);
    expect("synth --scenario " + p("soh.json") + " --out " + p("soh_data"), 0);
    expect("synth --scenario " + p("probe.json") + " --out " + p("probe_data"), 0);
    expect("synth --scenario " + p("thermal.json") + " --out " + p("th_data"), 0);
    expect("ingest --input " + p("probe_data/T25/probe.csv") + " --out " + p("ingest"), 0);
    expect("soc train --data " + p("soc_data") + " --epochs 15 --seed 7 --out " + p("soc"), 0);
    expect("soc eval --data " + p("soc_data") + " --model " + p("soc/network.json") + " --out " + p("soc_eval"), 0);
    expect("soc predict --input " + p("soc_data/T25/s_2.csv") + " --model " + p("soc/network.json") + " --out " +
               p("soc_predict"),
           0);
    expect("soh gate --input " + p("probe_data/T25/fast.csv") + " --out " + p("gate"), 0);
    expect("soh curves --input " + p("probe_data/T25/probe.csv") + " --out " + p("curves"), 0);
    expect("soh calibrate --data " + p("soh_data") + " --out " + p("cal"), 0);
    expect("soh estimate --input " + p("probe_data/T25/probe.csv") + " --lut " + p("cal/lut.txt") + " --out " + p("est"), 0);
    expect("soh estimate --input " + p("probe_data/T25/fast.csv") + " --lut " + p("cal/lut.txt") + " --out " +
               p("est_fast"),
           3);
    expect("thermal replay --input " + p("th_data/thermal/pack.csv") + " --out " + p("replay"), 0);
    expect("thermal watch --input " + p("th_data/thermal/pack.csv") + " --out " + p("watch"), 0);
    expect("thermal watch --input " + p("th_data/thermal/pack.csv") + " --out " + p("watch"), 0);
    expect("report --input " + p(".") + " --svg --out " + p("summary"), 0);
    return bad;
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "battkit_acceptance_cli";
    const int bad_a = pipelines(dir);
    const auto a = snapshot(dir);
    const int bad_b = pipelines(dir);
    const auto b = snapshot(dir);
    std::size_t differing = 0;
    std::string first;
    for (const auto& [name, content] : a) {
        auto it = b.find(name);
        if (it == b.end() || it->second != content) {
            ++differing;
            if (first.empty()) first = name;
        }
    }
    differing += b.size() > a.size() ? b.size() - a.size() : 0;
    const bool ok = bad_a == 0 && bad_b == 0 && differing == 0 && a.size() > 20;
    if (ok) fs::remove_all(dir);
    return {ok, fmt("%zu artifacts from 17 commands byte-identical across two runs; %zu differ%s%s; %d unexpected exit "
                    "codes",
                    a.size(), differing, first.empty() ? "" : ", first ", first.c_str(), bad_a + bad_b)};
}

} // namespace

int main() {
    int failed = 0;
    auto report = [&](int n, const char* name, const Outcome& o) {
        std::printf("criterion %d %s: %s - %s\n", n, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    };

    const auto s = soc_run();
    report(1, "SOC accuracy",
           {s.held_out.rmse < 3.0 && s.held_out.max_abs_error < 5.0 && s.seconds < 300.0,
            fmt("held-out RMSE %.2f%% (< 3), max error %.2f%% (< 5) over %zu rows; trained on %zu rows at "
                "-10/0/25/40/50 degC; %.1f s",
                s.held_out.rmse, s.held_out.max_abs_error, s.held_out.count, s.train_rows, s.seconds)});
    report(2, "SOC cross-profile", {s.ac.rmse < 3.0, fmt("AC-style charges RMSE %.2f%% (< 3), max error %.2f%% over %zu rows",
                                                        s.ac.rmse, s.ac.max_abs_error, s.ac.count)});
    report(3, "LM correctness", lm_correctness());
    report(4, "SOH accuracy", soh_accuracy());
    report(5, "differential-curve identities", differential_identities());
    report(6, "SBD oracle equivalence", sbd_equivalence());
    report(7, "early detection", early_detection());
    report(8, "thermal simulator physics", thermal_physics());
    report(9, "determinism", determinism());
    std::printf("%s: %d of 9 criteria failed\n", failed ? "FAIL" : "PASS", failed);
    return failed ? 1 : 0;
}
