#include "battkit/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace battkit::signal;

TEST_SUITE("signal") {

TEST_CASE("savitzky-golay leaves polynomials up to its order unchanged") {
    std::vector<double> y(40);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = static_cast<double>(i) * 0.1;
        y[i] = 1.0 - 2.0 * x + 0.5 * x * x;
    }
    auto s = savitzky_golay(y, 9, 2);
    REQUIRE(s.size() == y.size());
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(s[i] == doctest::Approx(y[i]).epsilon(1e-10));
}

TEST_CASE("savitzky-golay 5/2 centre weights match the textbook values") {
    auto c = savgol_coefficients(5, 2);
    const double expect[] = {-3, 12, 17, 12, -3};
    for (int i = 0; i < 5; ++i) CHECK(c[i] == doctest::Approx(expect[i] / 35.0));
}

TEST_CASE("savitzky-golay reduces white noise") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> y(500);
    for (auto& v : y) v = g(rng);
    auto s = savitzky_golay(y, 15, 2);
    double e0 = 0, e1 = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        e0 += y[i] * y[i];
        e1 += s[i] * s[i];
    }
    CHECK(e1 < 0.4 * e0);
}

TEST_CASE("peaks of two gaussians are found at their centres") {
    std::vector<double> y(200);
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double x = static_cast<double>(i);
        y[i] = std::exp(-0.5 * std::pow((x - 60) / 6, 2)) + 0.5 * std::exp(-0.5 * std::pow((x - 140) / 8, 2));
    }
    auto p = find_peaks(y, {});
    REQUIRE(p.size() == 2);
    CHECK(p[0].index == 60);
    CHECK(p[1].index == 140);
    CHECK(p[0].prominence == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(p[1].prominence == doctest::Approx(0.5).epsilon(1e-2));

    PeakConfig strict;
    strict.min_prominence = 0.7;
    CHECK(find_peaks(y, strict).size() == 1);

    auto neg = y;
    for (auto& v : neg) v = -v;
    auto val = find_valleys(neg, {});
    REQUIRE(val.size() == 2);
    CHECK(val[0].height == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("masked samples split the signal and never host a peak") {
    std::vector<double> y{0, 1, 3, 1, 0, 2, 0};
    const bool mask[] = {false, false, true, false, false, false, false};
    auto p = find_peaks(y, {}, mask);
    // Without index 2 the run 0..1 has no interior maximum; 5 is still a peak.
    REQUIRE(p.size() == 1);
    CHECK(p[0].index == 5);
}

TEST_CASE("min separation keeps the more prominent peak") {
    std::vector<double> y{0, 1, 0.5, 2, 0, 0, 0};
    PeakConfig c;
    c.min_separation = 3;
    auto p = find_peaks(y, c);
    REQUIRE(p.size() == 1);
    CHECK(p[0].index == 3);
}

TEST_CASE("median and interp") {
    CHECK(median({3, 1, 2}) == 2.0);
    CHECK(median({4, 1, 2, 3}) == 2.5);
    std::vector<double> x{0, 1, 3}, y{0, 10, 30};
    CHECK(interp(x, y, 2.0) == doctest::Approx(20.0));
    CHECK(interp(x, y, -1.0) == 0.0);
    CHECK(interp(x, y, 9.0) == 30.0);
}

}
