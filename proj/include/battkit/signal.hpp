#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace battkit::signal {

/// Savitzky-Golay smoothing. The interior uses the symmetric convolution
/// kernel; the first and last half-windows are evaluated from the polynomial
/// fitted to the first/last full window, so polynomials up to `order` pass
/// through unchanged everywhere. `window` must be odd and > order.
std::vector<double> savitzky_golay(std::span<const double> y, std::size_t window, std::size_t order);

/// Convolution weights for the centre point of a Savitzky-Golay window.
std::vector<double> savgol_coefficients(std::size_t window, std::size_t order);

struct Extremum {
    std::size_t index = 0;
    double height = 0.0;
    double prominence = 0.0;
};

struct PeakConfig {
    double min_prominence = 0.0;
    /// Minimum distance between retained peaks, in samples. When two peaks are
    /// closer the more prominent one wins.
    std::size_t min_separation = 1;
};

/// Strict interior local maxima (plateaus count once, at their left edge)
/// with topographic prominence. Samples flagged in `mask` (true = unusable)
/// split the signal; extrema are never reported on a masked sample or at
/// either end of a usable run.
std::vector<Extremum> find_peaks(std::span<const double> y, const PeakConfig& config,
                                 std::span<const bool> mask = {});

/// Valleys reported with positive prominence and their (negative-signed
/// curve's) height restored to the original sign.
std::vector<Extremum> find_valleys(std::span<const double> y, const PeakConfig& config,
                                   std::span<const bool> mask = {});

double median(std::vector<double> values);

/// Piecewise-linear interpolation on a strictly increasing abscissa with
/// constant extrapolation.
double interp(std::span<const double> x, std::span<const double> y, double at);

} // namespace battkit::signal
