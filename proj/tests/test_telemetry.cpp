#include "helpers.hpp"

#include "battkit/error.hpp"
#include "battkit/synth.hpp"
#include "battkit/telemetry.hpp"

#include <doctest.h>

#include <sstream>

using namespace battkit;
using namespace battkit::telemetry;
using testutil::row;

TEST_SUITE("telemetry") {

TEST_CASE("three well-formed rows ingest cleanly") {
    std::istringstream in("timestamp,pack_current,pack_voltage,cell_v0,temp0\n"
                          "0,1.5,3.70,3.70,25\n"
                          "1,1.5,3.71,3.71,25\n"
                          "2,1.5,3.72,3.72,25.1\n");
    auto r = ingest(in);
    CHECK(r.samples.size() == 3);
    CHECK(r.rejects.total() == 0);
    CHECK(r.samples[2].temperatures[0] == doctest::Approx(25.1));
    CHECK(r.cell_count == 1);
    CHECK(r.sensor_count == 1);
}

TEST_CASE("one corrupted row among 100 is rejected and counted") {
    std::ostringstream csv;
    csv << "timestamp,pack_current,pack_voltage,cell_v0,temp0\n";
    for (int i = 0; i < 100; ++i) {
        if (i == 37) csv << "37,abc,3.7,3.7,25\n";
        else csv << i << ",1.0,3.7,3.7,25\n";
    }
    std::istringstream in(csv.str());
    auto r = ingest(in);
    CHECK(r.samples.size() == 99);
    CHECK(r.rejects.total() == 1);
    CHECK(r.rejects.by_reason.at("parse_error") == 1);
}

TEST_CASE("missing mandatory column raises a schema error") {
    std::istringstream in("timestamp,pack_voltage,cell_v0\n0,3.7,3.7\n");
    CHECK_THROWS_AS(ingest(in), SchemaError);
}

TEST_CASE("empty fields are flagged invalid, not rejected") {
    std::istringstream in("timestamp,pack_current,pack_voltage,cell_v0,temp0\n0,,3.7,3.7,25\n");
    auto r = ingest(in);
    REQUIRE(r.samples.size() == 1);
    CHECK_FALSE(r.samples[0].flags.current);
    CHECK(r.samples[0].flags.pack_voltage);
}

TEST_CASE("discharge-positive sources are flipped") {
    SchemaConfig s;
    s.discharge_positive = true;
    std::istringstream in("timestamp,pack_current,pack_voltage\n0,-2.0,3.7\n");
    auto r = ingest(in, s);
    CHECK(r.samples[0].pack_current == 2.0);
}

TEST_CASE("write then ingest reproduces 10000 rows exactly") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<TelemetrySample> rows;
    double t = 1.7e9;
    for (int i = 0; i < 10000; ++i) {
        t += 0.5 + u(rng) * 0.25;
        rows.push_back(TelemetrySample::make(t, 10.0 * u(rng), 370.0 + u(rng), {3.7 + 0.1 * u(rng), 3.7 + 0.1 * u(rng)},
                                             {25.0 + u(rng), 26.0 + u(rng), 24.0 + u(rng)}));
    }
    for (auto format : {FileFormat::delimited, FileFormat::json_lines}) {
        SchemaConfig s;
        s.format = format;
        std::stringstream buf;
        write(buf, rows, s);
        auto back = ingest(buf, s);
        CHECK(back.rejects.total() == 0);
        REQUIRE(back.samples.size() == rows.size());
        bool same = true;
        for (std::size_t i = 0; i < rows.size(); ++i) same = same && back.samples[i] == rows[i];
        CHECK(same);
    }
}

TEST_CASE("iso8601 timestamps parse to epoch seconds") {
    CHECK(*parse_iso8601("1970-01-02T00:00:00Z") == 86400.0);
    CHECK(*parse_iso8601("2023-11-14T00:00:00.5Z") == doctest::Approx(1699920000.5));
    CHECK(*parse_iso8601("2023-11-14T02:00:00+02:00") == 1699920000.0);
    CHECK_FALSE(parse_iso8601("yesterday"));
    CHECK(*parse_iso8601(format_iso8601(1699920000.0)) == 1699920000.0);
}

TEST_CASE("out-of-range cell voltage is flagged, the rest of the row kept") {
    std::vector<TelemetrySample> in{row(0, 1.0), row(1, 1.0, 9.9), row(2, 1.0)};
    auto r = clean(in);
    REQUIRE(r.samples.size() == 3);
    CHECK_FALSE(r.samples[1].flags.cells[0]);
    CHECK(r.samples[1].flags.current);
    CHECK(r.samples[1].flags.temperatures[0]);
    CHECK(r.report.flagged_cell_voltage == 1);
}

TEST_CASE("duplicate and out-of-order timestamps are removed") {
    std::vector<TelemetrySample> in{row(0, 1), row(1, 1), row(1, 2), row(0.5, 1), row(2, 1)};
    auto r = clean(in);
    REQUIRE(r.samples.size() == 3);
    CHECK(r.samples[1].pack_current == 1.0);
    CHECK(r.report.removed_duplicate_timestamp == 1);
    CHECK(r.report.removed_out_of_order == 1);
}

TEST_CASE("rows with every field invalid are dropped") {
    auto bad = TelemetrySample::make(1, 5000.0, 99.0, {9.0}, {200.0});
    std::vector<TelemetrySample> in{row(0, 1), bad, row(2, 1)};
    auto r = clean(in);
    CHECK(r.samples.size() == 2);
    CHECK(r.report.removed_all_invalid == 1);
}

TEST_CASE("clean preserves order and is the identity on valid data") {
    std::vector<TelemetrySample> in;
    for (int i = 0; i < 50; ++i) in.push_back(row(i * 2.0, 0.1 * i));
    auto r = clean(in);
    REQUIRE(r.samples.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(r.samples[i] == in[i]);
}

TEST_CASE("discharge-only stream has no charge segments") {
    auto rows = testutil::constant_rows(0, 3600, 10, -3.0);
    GateConfig g;
    g.nominal_capacity_ah = 3.0;
    CHECK(segment_charges(rows, g).empty());
}

TEST_CASE("simulated CCCV charge yields one segment on the true boundaries") {
    synth::ChargeSimConfig cfg;
    cfg.dt = 2.0;
    auto sim = synth::simulate_charge(synth::CellSimConfig{}, {}, cfg);
    GateConfig g;
    g.nominal_capacity_ah = 3.0;
    g.start_c_rate = 0.01;
    auto segs = segment_charges(sim.samples, g);
    REQUIRE(segs.size() == 1);
    CHECK(std::abs(static_cast<long>(segs[0].start_index()) - static_cast<long>(sim.charge_begin)) <= 1);
    // The taper ends at 0.02C; the gate at 0.01C may keep one more sample.
    CHECK(std::abs(static_cast<long>(segs[0].end_index()) - static_cast<long>(sim.charge_end)) <= 1);
}

TEST_CASE("two charges separated by a two hour pause give two segments") {
    auto a = testutil::constant_rows(0, 3600, 10, 1.5);
    auto rest = testutil::constant_rows(3610, 3610 + 7200, 10, 0.0);
    auto b = testutil::constant_rows(3620 + 7200, 3620 + 7200 + 1800, 10, 1.5);
    std::vector<TelemetrySample> all = a;
    all.insert(all.end(), rest.begin(), rest.end());
    all.insert(all.end(), b.begin(), b.end());
    GateConfig g;
    g.nominal_capacity_ah = 3.0;
    auto segs = segment_charges(all, g);
    REQUIRE(segs.size() == 2);
    CHECK(segs[0].charge_throughput() == doctest::Approx(1.5));
    CHECK(segs[1].charge_throughput() == doctest::Approx(0.75));
    CHECK(segs[0].mean_c_rate() == doctest::Approx(0.5));
}

TEST_CASE("a short pause inside a charge does not split it") {
    auto a = testutil::constant_rows(0, 1800, 10, 1.5);
    auto pause = testutil::constant_rows(1810, 1900, 10, 0.0);
    auto b = testutil::constant_rows(1910, 3600, 10, 1.5);
    a.insert(a.end(), pause.begin(), pause.end());
    a.insert(a.end(), b.begin(), b.end());
    GateConfig g;
    g.nominal_capacity_ah = 3.0;
    CHECK(segment_charges(a, g).size() == 1);
}

TEST_CASE("segmenting the concatenated segments reproduces them") {
    auto a = testutil::constant_rows(0, 3600, 10, 1.5);
    auto rest = testutil::constant_rows(3610, 3610 + 7200, 10, -1.0);
    auto b = testutil::constant_rows(3620 + 7200, 3620 + 7200 + 1800, 10, 0.9);
    a.insert(a.end(), rest.begin(), rest.end());
    a.insert(a.end(), b.begin(), b.end());
    GateConfig g;
    g.nominal_capacity_ah = 3.0;
    auto first = segment_charges(a, g);
    std::vector<TelemetrySample> concat;
    for (const auto& s : first) concat.insert(concat.end(), s.samples().begin(), s.samples().end());
    auto second = segment_charges(concat, g);
    REQUIRE(second.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(second[i].samples().front().timestamp == first[i].samples().front().timestamp);
        CHECK(second[i].samples().back().timestamp == first[i].samples().back().timestamp);
        CHECK(second[i].samples().size() == first[i].samples().size());
    }
}

TEST_CASE("charge segment rejects negative current") {
    std::vector<TelemetrySample> s{row(0, 1.0), row(1, -0.5)};
    CHECK_THROWS_AS(ChargeSegment(s, 3.0), DomainError);
    CHECK_THROWS_AS(ChargeSegment({row(0, 1.0), row(1, 1.0)}, 0.0), DomainError);
}

TEST_CASE("throughput is trapezoidal and agrees with a fine rectangle rule") {
    // i(t) = 2 + sin(t / 300), sampled every 4 s for an hour.
    auto current = [](double t) { return 2.0 + std::sin(t / 300.0); };
    std::vector<TelemetrySample> s;
    for (double t = 0; t <= 3600; t += 4) s.push_back(row(t, current(t)));
    double trap = 0.0;
    for (std::size_t k = 1; k < s.size(); ++k)
        trap += 0.5 * (s[k].pack_current + s[k - 1].pack_current) * (s[k].timestamp - s[k - 1].timestamp);
    CHECK(charge_throughput_ah(s) == doctest::Approx(trap / 3600.0).epsilon(1e-12));
    double mid = 0.0;
    for (double t = 1; t < 3600; t += 2) mid += current(t) * 2.0;
    CHECK(charge_throughput_ah(s) == doctest::Approx(mid / 3600.0).epsilon(1e-4));
}

TEST_CASE("100 samples, window 10, stride 10 gives 10 windows") {
    auto rows = testutil::constant_rows(0, 99, 1, 1.0);
    WindowConfig wc;
    wc.dt = 1.0;
    auto w = window_signals(rows, SensorSelector{}, 10, 10, wc);
    REQUIRE(w.size() == 10);
    for (const auto& x : w) {
        CHECK(x.values.size() == 10);
        CHECK(x.is_static);
    }
    CHECK(w[3].origin_timestamp == 30.0);
    CHECK(w[3].end_timestamp() == 39.0);
}

TEST_CASE("irregular timestamps are resampled by linear interpolation") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.2, 1.8);
    std::vector<TelemetrySample> rows;
    double t = 0.0;
    while (t < 200.0) {
        rows.push_back(row(t, 1.0, 3.7, std::cos(t / 20.0)));
        t += u(rng);
    }
    rows.push_back(row(t, 1.0, 3.7, std::cos(t / 20.0)));
    WindowConfig wc;
    wc.dt = 1.0;
    auto w = window_signals(rows, SensorSelector{}, 50, 50, wc);
    REQUIRE(w.size() >= 3);
    for (const auto& win : w) {
        for (std::size_t k = 0; k < win.values.size(); ++k) {
            const double tk = win.origin_timestamp + static_cast<double>(k);
            // Independent oracle: find the bracketing pair by scanning.
            std::size_t j = 0;
            while (rows[j + 1].timestamp < tk) ++j;
            const double a = rows[j].timestamp, b = rows[j + 1].timestamp;
            const double va = rows[j].temperatures[0], vb = rows[j + 1].temperatures[0];
            const double expect = tk <= a ? va : va + (vb - va) * (tk - a) / (b - a);
            CHECK(win.values[k] == doctest::Approx(expect).epsilon(1e-12));
        }
        CHECK_FALSE(win.is_static);
    }
}

TEST_CASE("windowing selects channels and rejects bad arguments") {
    std::vector<TelemetrySample> rows;
    for (int i = 0; i < 30; ++i) rows.push_back(TelemetrySample::make(i, 1.0, 7.4, {3.7, 3.7}, {20.0 + i, 30.0, 40.0}));
    SensorSelector sel;
    sel.channels = {0, 2};
    WindowConfig wc;
    wc.dt = 1.0;
    auto w = window_signals(rows, sel, 10, 5, wc);
    REQUIRE(w.size() == 10);
    CHECK(w[0].sensor_id == 0);
    CHECK(w[1].sensor_id == 2);
    CHECK(w[1].is_static);
    CHECK_FALSE(w[0].is_static);
    CHECK_THROWS_AS(window_signals(rows, sel, 1, 5, wc), DomainError);
    CHECK_THROWS_AS(window_signals(rows, sel, 10, 0, wc), DomainError);
}

}
