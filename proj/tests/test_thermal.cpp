#include "helpers.hpp"

#include "battkit/error.hpp"
#include "battkit/sbd.hpp"
#include "battkit/thermal.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace battkit;
using namespace battkit::thermal;
using telemetry::SignalWindow;

namespace {

constexpr int kSensors = 8;
constexpr std::size_t kLen = 60;

// Every sensor follows a common heating bump whose position moves from batch
// to batch; `extra(sensor, batch, i)` is added on top.
using Extra = std::function<double(int, int, std::size_t)>;

std::vector<SignalWindow> batch(int b, std::mt19937_64& rng, const Extra& extra = {}) {
    std::normal_distribution<double> noise(0.0, 0.05);
    const double centre = 15.0 + static_cast<double>((b * 7) % 30);
    std::vector<SignalWindow> out;
    for (int s = 0; s < kSensors; ++s) {
        SignalWindow w;
        w.sensor_id = s;
        w.dt = 60.0;
        w.origin_timestamp = 900.0 * b;
        const double gain = 1.0 + 0.02 * (s - kSensors / 2);
        for (std::size_t i = 0; i < kLen; ++i) {
            const double x = (static_cast<double>(i) - centre) / 8.0;
            double v = 25.0 + 4.0 * gain * std::exp(-x * x) + noise(rng);
            if (extra) v += extra(s, b, i);
            w.values.push_back(v);
        }
        out.push_back(std::move(w));
    }
    return out;
}

struct Run {
    std::vector<AnomalyVerdict> verdicts;
    ShapeClusterState state;
};

Run replay(int batches, std::uint64_t seed, const Extra& extra = {}, const Thresholds& th = {}) {
    std::mt19937_64 rng(seed);
    Run r;
    for (int b = 0; b < batches; ++b) {
        auto res = detect(batch(b, rng, extra), r.state, th);
        r.verdicts.push_back(res.verdict);
        r.state = res.state;
    }
    return r;
}

} // namespace

TEST_SUITE("thermal") {

TEST_CASE("sensors sharing one shape never trigger") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto r = replay(60, seed);
        int triggers = 0;
        for (const auto& v : r.verdicts) triggers += v.triggered;
        CHECK(triggers == 0);
        CHECK(r.state.reference_frozen);
    }
}

TEST_CASE("a sensor that starts to run away is isolated") {
    // From batch 40 sensor 5 adds an accelerating ramp.
    Extra ramp = [](int s, int b, std::size_t i) {
        if (s != 5 || b < 40) return 0.0;
        const double t = (b - 40) * 15.0 + static_cast<double>(i);
        return 0.002 * t * t;
    };
    auto r = replay(50, 7, ramp);
    int first = -1;
    for (int b = 0; b < 50; ++b)
        if (r.verdicts[b].triggered) {
            first = b;
            break;
        }
    REQUIRE(first >= 40);
    CHECK(first <= 42);
    const auto& v = r.verdicts[static_cast<std::size_t>(first)];
    REQUIRE_FALSE(v.offending_sensors.empty());
    CHECK(v.offending_sensors.front() == 5);
    CHECK(v.criterion == Criterion::membership_change);
}

TEST_CASE("a quiet pack with one warming sensor is isolated") {
    // No drive heat: every window is static except sensor 2 after batch 30.
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0.0, 0.05);
    ShapeClusterState st;
    int first = -1, who = -1;
    for (int b = 0; b < 40; ++b) {
        std::vector<SignalWindow> ws;
        for (int s = 0; s < kSensors; ++s) {
            SignalWindow w;
            w.sensor_id = s;
            w.dt = 60.0;
            w.origin_timestamp = 900.0 * b;
            for (std::size_t i = 0; i < kLen; ++i) {
                double v = 22.0 + noise(rng);
                if (s == 2 && b >= 30) v += 0.04 * static_cast<double>(i + 15 * (b - 30));
                w.values.push_back(v);
            }
            ws.push_back(w);
        }
        auto res = detect(ws, st, Thresholds{});
        st = res.state;
        if (res.verdict.triggered && first < 0) {
            first = b;
            who = res.verdict.offending_sensors.front();
        }
    }
    CHECK(first == 30);
    CHECK(who == 2);
}

TEST_CASE("a shape drift inside the majority raises only the fitting-error criterion") {
    // Sensor 3 picks up a second, smaller bump: still closer to the group
    // than sep_min, but far above its own fitting-error history.
    Extra drift = [](int s, int b, std::size_t i) {
        if (s != 3 || b < 40) return 0.0;
        const double x = (static_cast<double>(i) - 52.0) / 3.0;
        return 4.0 * std::exp(-x * x);
    };
    auto r = replay(41, 11, drift);
    for (int b = 0; b < 40; ++b) CHECK_FALSE(r.verdicts[b].triggered);
    const auto& v = r.verdicts.back();
    CHECK(v.triggered);
    CHECK(v.criterion == Criterion::fitting_error_rise);
    REQUIRE_FALSE(v.offending_sensors.empty());
    CHECK(v.offending_sensors.front() == 3);
    for (const auto& e : v.evidence)
        if (e.sensor_id == 3) CHECK(e.rise_exceeded);
}

TEST_CASE("isolation orders sensors by their rise, largest first") {
    AnomalyVerdict v;
    v.triggered = true;
    SensorEvidence a, b, c;
    a.sensor_id = 1;
    a.delta = 0.3;
    a.rise_exceeded = true;
    b.sensor_id = 4;
    b.delta = 0.6;
    b.rise_exceeded = true;
    c.sensor_id = 6;
    c.delta = 0.9;
    v.evidence = {a, b, c};
    CHECK(isolate(v, ShapeClusterState{}) == std::vector<int>{4, 1});
}

TEST_CASE("replaying a batch from the reference period stays quiet") {
    std::mt19937_64 rng(5);
    std::vector<std::vector<SignalWindow>> seen;
    ShapeClusterState st;
    for (int b = 0; b < 40; ++b) {
        seen.push_back(batch(b, rng));
        st = detect(seen.back(), st, Thresholds{}).state;
    }
    REQUIRE(st.reference_frozen);
    for (int b : {3, 10, 20}) CHECK_FALSE(detect(seen[static_cast<std::size_t>(b)], st, Thresholds{}).verdict.triggered);
}

TEST_CASE("detection is deterministic") {
    auto a = replay(30, 9), b = replay(30, 9);
    CHECK(state_to_json(a.state) == state_to_json(b.state));
    for (std::size_t i = 0; i < a.verdicts.size(); ++i)
        CHECK(verdict_to_json(a.verdicts[i]) == verdict_to_json(b.verdicts[i]));
}

TEST_CASE("state survives a JSON round-trip") {
    auto r = replay(30, 12);
    const auto text = state_to_json(r.state);
    auto back = state_from_json(text);
    CHECK(state_to_json(back) == text);
    std::mt19937_64 rng(99);
    auto next = batch(30, rng);
    CHECK(verdict_to_json(detect(next, back, {}).verdict) == verdict_to_json(detect(next, r.state, {}).verdict));
    CHECK_THROWS(state_from_json("{\"format\": \"something else\"}"));
}

TEST_CASE("missing sensors are reported and bad batches rejected") {
    auto r = replay(5, 13);
    std::mt19937_64 rng(1);
    auto b = batch(5, rng);
    b.erase(b.begin() + 2);
    auto res = detect(b, r.state, {});
    CHECK(res.verdict.missing_sensors == std::vector<int>{2});
    CHECK_THROWS_AS(detect(std::vector<SignalWindow>{}, r.state, {}), DomainError);
    auto ragged = batch(6, rng);
    ragged[1].values.pop_back();
    CHECK_THROWS_AS(detect(ragged, r.state, {}), DomainError);
}

TEST_CASE("batches are grouped by origin, oldest first") {
    std::mt19937_64 rng(1);
    auto b1 = batch(1, rng), b0 = batch(0, rng);
    std::vector<SignalWindow> mixed = b1;
    mixed.insert(mixed.end(), b0.begin(), b0.end());
    auto g = batches_by_origin(mixed);
    REQUIRE(g.size() == 2);
    CHECK(g[0].front().origin_timestamp == 0.0);
    CHECK(g[1].size() == static_cast<std::size_t>(kSensors));
}

}
