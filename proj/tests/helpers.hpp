#pragma once

#include "battkit/telemetry.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testutil {

using battkit::telemetry::TelemetrySample;

inline TelemetrySample row(double t, double current, double cell_v = 3.7, double temp = 25.0) {
    return TelemetrySample::make(t, current, cell_v, {cell_v}, {temp});
}

/// Constant-current rows every `dt` seconds over [t0, t1].
inline std::vector<TelemetrySample> constant_rows(double t0, double t1, double dt, double current) {
    std::vector<TelemetrySample> out;
    for (double t = t0; t <= t1 + 1e-9; t += dt) out.push_back(row(t, current));
    return out;
}

inline std::vector<double> random_series(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
}

} // namespace testutil
