#include "battkit/thermal.hpp"

#include "battkit/error.hpp"
#include "battkit/kshape.hpp"
#include "battkit/sbd.hpp"
#include "battkit/signal.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace battkit::thermal {

namespace {

constexpr const char* kModule = "thermalwatch";
constexpr int kStateVersion = 1;

struct Prepared {
    int sensor = 0;
    std::vector<double> smooth;
    double p2p = 0.0;
    bool is_static = false;
};

std::vector<Prepared> prepare(std::span<const telemetry::SignalWindow> batch, const Thresholds& th) {
    std::vector<Prepared> out;
    out.reserve(batch.size());
    const std::size_t n = batch.front().values.size();
    for (const auto& w : batch) {
        if (w.values.size() != n) throw DomainError(kModule, "windows in a batch must share one length");
        if (n < 2) throw DomainError(kModule, "windows need at least two samples");
        Prepared p;
        p.sensor = w.sensor_id;
        p.smooth = n >= th.smooth_window ? signal::savitzky_golay(w.values, th.smooth_window, th.smooth_order)
                                         : w.values;
        const auto [lo, hi] = std::minmax_element(p.smooth.begin(), p.smooth.end());
        p.p2p = *hi - *lo;
        p.is_static = w.is_static || p.p2p < th.static_p2p || znormalize(p.smooth).is_static;
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(), [](const Prepared& a, const Prepared& b) { return a.sensor < b.sensor; });
    for (std::size_t i = 1; i < out.size(); ++i)
        if (out[i].sensor == out[i - 1].sensor) throw DomainError(kModule, "duplicate sensor in batch");
    return out;
}

bool any_too_close(const std::vector<std::vector<double>>& centroids, double sep_min) {
    for (std::size_t a = 0; a < centroids.size(); ++a)
        for (std::size_t b = a + 1; b < centroids.size(); ++b) {
            if (znormalize(centroids[a]).is_static || znormalize(centroids[b]).is_static) continue;
            if (sbd(centroids[a], centroids[b]).distance < sep_min) return true;
        }
    return false;
}

/// Fewest clusters (down from k) whose centroids are all separated.
KShapeResult cluster_active(const std::vector<std::vector<double>>& active, const Thresholds& th) {
    KShapeConfig cfg;
    cfg.restarts = th.restarts;
    cfg.max_iterations = th.max_iterations;
    cfg.seed = th.seed;
    cfg.k = std::min(th.k, active.size());
    while (true) {
        auto res = kshape_cluster(active, cfg);
        if (cfg.k <= 1 || !any_too_close(res.centroids, th.sep_min)) return res;
        --cfg.k;
    }
}

double median_of(const std::deque<double>& d) { return signal::median(std::vector<double>(d.begin(), d.end())); }

bool rises(double err, double base, const Thresholds& th) {
    return err > th.rise_factor * base && err - base > th.rise_abs;
}

} // namespace

const char* to_string(Criterion c) {
    switch (c) {
    case Criterion::none: return "none";
    case Criterion::membership_change: return "membership-change";
    case Criterion::fitting_error_rise: return "fitting-error-rise";
    }
    return "none";
}

DetectResult detect(std::span<const telemetry::SignalWindow> batch, const ShapeClusterState& state,
                    const Thresholds& th) {
    if (batch.empty()) throw DomainError(kModule, "empty window batch");
    if (th.k == 0) throw DomainError(kModule, "k must be positive");
    const auto prepared = prepare(batch, th);

    DetectResult result;
    result.state = state;
    ShapeClusterState& next = result.state;
    AnomalyVerdict& verdict = result.verdict;
    next.k = th.k;

    verdict.window_origin = batch.front().origin_timestamp;
    verdict.window_end = batch.front().end_timestamp();
    for (const auto& w : batch) {
        verdict.window_origin = std::min(verdict.window_origin, w.origin_timestamp);
        verdict.window_end = std::max(verdict.window_end, w.end_timestamp());
    }
    std::set<int> present;
    for (const auto& p : prepared) present.insert(p.sensor);
    for (int s : state.sensors)
        if (!present.count(s)) verdict.missing_sensors.push_back(s);

    // Cluster the active windows.
    std::vector<std::vector<double>> active;
    std::vector<std::size_t> active_idx;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        if (!prepared[i].is_static) {
            active.push_back(prepared[i].smooth);
            active_idx.push_back(i);
        }
    }
    std::vector<int> group(prepared.size(), kStaticGroup);
    std::vector<double> fit(prepared.size(), 0.0);
    std::vector<std::vector<double>> centroids;
    if (!active.empty()) {
        const auto res = cluster_active(active, th);
        centroids = res.centroids;
        for (std::size_t j = 0; j < active_idx.size(); ++j) {
            group[active_idx[j]] = static_cast<int>(res.labels[j]);
            fit[active_idx[j]] = res.distances[j];
        }
    }

    // Majority group: the largest, ties to the lower id (static first).
    std::map<int, std::size_t> sizes;
    for (int g : group) ++sizes[g];
    int majority = sizes.begin()->first;
    for (const auto& [g, n] : sizes)
        if (n > sizes[majority]) majority = g;

    std::vector<double> majority_p2p;
    for (std::size_t i = 0; i < prepared.size(); ++i)
        if (group[i] == majority) majority_p2p.push_back(prepared[i].p2p);
    const double majority_swing = signal::median(majority_p2p);

    std::set<int> out;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        const int g = group[i];
        if (g == majority) continue;
        bool is_out = false;
        if (majority == kStaticGroup) {
            is_out = prepared[i].p2p >= std::max(th.lone_active_p2p, th.lone_active_ratio * majority_swing);
        } else if (g == kStaticGroup) {
            is_out = majority_swing >= std::max(th.lone_active_p2p, th.lone_active_ratio * prepared[i].p2p);
        } else {
            is_out = sbd(prepared[i].smooth, centroids[static_cast<std::size_t>(majority)]).distance >= th.sep_min;
        }
        if (is_out) out.insert(prepared[i].sensor);
    }

    // Criterion 1: a sensor left the majority since the previous batch.
    bool membership = false;
    std::map<int, SensorEvidence> evidence;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        SensorEvidence e;
        e.sensor_id = prepared[i].sensor;
        e.sbd = fit[i];
        e.peak_to_peak = prepared[i].p2p;
        e.cluster = group[i];
        if (state.initialized && out.count(e.sensor_id) && !state.predecessor.out.count(e.sensor_id)) {
            e.membership_changed = true;
            membership = true;
        }
        evidence[e.sensor_id] = e;
    }

    // Criterion 2: fitting error against the trailing median and the reference.
    bool rise = false;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        if (prepared[i].is_static) continue;
        auto& e = evidence[prepared[i].sensor];
        double base = 0.0;
        bool have_base = false;
        bool exceeded = false;
        if (auto it = state.fitting_errors.find(e.sensor_id);
            it != state.fitting_errors.end() && it->second.size() >= th.min_history) {
            const double med = median_of(it->second);
            base = med;
            have_base = true;
            exceeded = rises(e.sbd, med, th);
        }
        if (state.reference_frozen) {
            if (auto it = state.reference_baseline.find(e.sensor_id); it != state.reference_baseline.end()) {
                base = have_base ? std::max(base, it->second) : it->second;
                have_base = true;
                exceeded = exceeded || rises(e.sbd, it->second, th);
            }
        }
        e.delta = have_base ? e.sbd - base : 0.0;
        if (exceeded && e.peak_to_peak >= th.rise_min_p2p && (!membership || th.evaluate_both)) {
            e.rise_exceeded = true;
            rise = true;
        }
    }

    for (auto& [id, e] : evidence) verdict.evidence.push_back(e);
    verdict.triggered = membership || rise;
    verdict.criterion = membership ? Criterion::membership_change
                                   : (rise ? Criterion::fitting_error_rise : Criterion::none);

    // Roll the state forward.
    ClusterSnapshot snap;
    snap.centroids = centroids;
    for (std::size_t i = 0; i < prepared.size(); ++i) snap.memberships[prepared[i].sensor] = group[i];
    snap.out = out;
    next.centroids = snap.centroids;
    next.memberships = snap.memberships;
    next.predecessor = snap;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        if (prepared[i].is_static) continue;
        auto& hist = next.fitting_errors[prepared[i].sensor];
        hist.push_back(fit[i]);
        while (hist.size() > th.trailing) hist.pop_front();
    }
    next.sensors.insert(present.begin(), present.end());
    next.initialized = true;
    ++next.batches;
    next.trigger_free = verdict.triggered ? 0 : next.trigger_free + 1;
    if (!next.reference_frozen && next.trigger_free >= th.warmup) {
        next.reference = snap;
        next.reference_frozen = true;
        for (const auto& [id, hist] : next.fitting_errors)
            if (!hist.empty()) next.reference_baseline[id] = median_of(hist);
    }

    verdict.offending_sensors = isolate(verdict, next);
    if (verdict.triggered && verdict.offending_sensors.empty()) verdict.triggered = false;
    if (!verdict.triggered) verdict.criterion = Criterion::none;
    return result;
}

std::vector<int> isolate(const AnomalyVerdict& verdict, const ShapeClusterState&) {
    std::vector<const SensorEvidence*> hits;
    for (const auto& e : verdict.evidence)
        if (e.membership_changed || e.rise_exceeded) hits.push_back(&e);
    std::stable_sort(hits.begin(), hits.end(), [](const SensorEvidence* a, const SensorEvidence* b) {
        if (a->delta != b->delta) return a->delta > b->delta;
        return a->sensor_id < b->sensor_id;
    });
    std::vector<int> out;
    out.reserve(hits.size());
    for (const auto* e : hits) out.push_back(e->sensor_id);
    return out;
}

std::vector<std::vector<telemetry::SignalWindow>> batches_by_origin(std::span<const telemetry::SignalWindow> windows) {
    std::map<double, std::vector<telemetry::SignalWindow>> by_time;
    for (const auto& w : windows) by_time[w.origin_timestamp].push_back(w);
    std::vector<std::vector<telemetry::SignalWindow>> out;
    out.reserve(by_time.size());
    for (auto& [t, ws] : by_time) out.push_back(std::move(ws));
    return out;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json snapshot_json(const ClusterSnapshot& s) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [id, c] : s.memberships) m[std::to_string(id)] = c;
    return {{"centroids", s.centroids}, {"memberships", m}, {"out", s.out}};
}

ClusterSnapshot snapshot_from(const nlohmann::json& j) {
    ClusterSnapshot s;
    s.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
    for (const auto& [k, v] : j.at("memberships").items()) s.memberships[std::stoi(k)] = v.get<int>();
    s.out = j.at("out").get<std::set<int>>();
    return s;
}

} // namespace

std::string state_to_json(const ShapeClusterState& s) {
    nlohmann::json j;
    j["format"] = "battkit.thermal_state";
    j["version"] = kStateVersion;
    j["k"] = s.k;
    j["centroids"] = s.centroids;
    nlohmann::json m = nlohmann::json::object();
    for (const auto& [id, c] : s.memberships) m[std::to_string(id)] = c;
    j["memberships"] = m;
    nlohmann::json fe = nlohmann::json::object();
    for (const auto& [id, d] : s.fitting_errors) fe[std::to_string(id)] = std::vector<double>(d.begin(), d.end());
    j["fitting_errors"] = fe;
    j["predecessor"] = snapshot_json(s.predecessor);
    j["reference"] = snapshot_json(s.reference);
    nlohmann::json rb = nlohmann::json::object();
    for (const auto& [id, v] : s.reference_baseline) rb[std::to_string(id)] = v;
    j["reference_baseline"] = rb;
    j["reference_frozen"] = s.reference_frozen;
    j["initialized"] = s.initialized;
    j["sensors"] = s.sensors;
    j["batches"] = s.batches;
    j["trigger_free"] = s.trigger_free;
    return j.dump(1);
}

ShapeClusterState state_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded() || j.value("format", "") != "battkit.thermal_state")
        throw DomainError(kModule, "not a battkit thermal state file");
    if (j.value("version", 0) != kStateVersion) throw DomainError(kModule, "unsupported thermal state version");
    try {
        ShapeClusterState s;
        s.k = j.at("k").get<std::size_t>();
        s.centroids = j.at("centroids").get<std::vector<std::vector<double>>>();
        for (const auto& [k, v] : j.at("memberships").items()) s.memberships[std::stoi(k)] = v.get<int>();
        for (const auto& [k, v] : j.at("fitting_errors").items()) {
            const auto vals = v.get<std::vector<double>>();
            s.fitting_errors[std::stoi(k)] = std::deque<double>(vals.begin(), vals.end());
        }
        s.predecessor = snapshot_from(j.at("predecessor"));
        s.reference = snapshot_from(j.at("reference"));
        for (const auto& [k, v] : j.at("reference_baseline").items()) s.reference_baseline[std::stoi(k)] = v.get<double>();
        s.reference_frozen = j.at("reference_frozen").get<bool>();
        s.initialized = j.at("initialized").get<bool>();
        s.sensors = j.at("sensors").get<std::set<int>>();
        s.batches = j.at("batches").get<std::size_t>();
        s.trigger_free = j.at("trigger_free").get<std::size_t>();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw DomainError(kModule, std::string("malformed thermal state: ") + e.what());
    }
}

void save_state(const ShapeClusterState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(kModule, "cannot write " + path);
    out << state_to_json(state) << '\n';
}

ShapeClusterState load_state(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(kModule, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return state_from_json(ss.str());
}

std::string verdict_to_json(const AnomalyVerdict& v) {
    nlohmann::json j;
    j["window_origin"] = v.window_origin;
    j["window_end"] = v.window_end;
    j["triggered"] = v.triggered;
    j["criterion"] = to_string(v.criterion);
    j["sensors"] = v.offending_sensors;
    auto ev = nlohmann::json::array();
    for (const auto& e : v.evidence) {
        if (!e.membership_changed && !e.rise_exceeded && !v.triggered) continue;
        ev.push_back({{"sensor", e.sensor_id},
                      {"sbd", e.sbd},
                      {"delta", e.delta},
                      {"p2p", e.peak_to_peak},
                      {"cluster", e.cluster}});
    }
    j["evidence"] = ev;
    if (!v.missing_sensors.empty()) j["missing"] = v.missing_sensors;
    return j.dump();
}

} // namespace battkit::thermal
