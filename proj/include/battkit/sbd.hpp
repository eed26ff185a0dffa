#pragma once

#include <span>
#include <vector>

namespace battkit::thermal {

struct ZNormalized {
    std::vector<double> values;
    /// Input had zero spread; values are all zero.
    bool is_static = false;
};

/// Mean 0, unit energy (sum of squares 1). Constant input maps to zeros.
ZNormalized znormalize(std::span<const double> values);

struct SbdResult {
    double distance = 0.0;  // in [0, 2]
    /// Shift w maximising sum_i x[i] * y[i + w].
    int shift = 0;
};

/// Shape-based distance 1 - max_w NCC_w(x, y) over all zero-padded shifts.
/// Both inputs are z-normalised first, so the result is invariant to positive
/// scaling and offsets. Ties on the maximum go to the smallest |w|, then to
/// the negative shift. Throws DomainError on length mismatch, n < 2, or a
/// constant input.
SbdResult sbd(std::span<const double> x, std::span<const double> y);

/// Normalised cross-correlation sequence for shifts -(n-1)..(n-1) of two
/// already z-normalised, non-zero inputs; entry k belongs to w = k - (n-1).
std::vector<double> ncc_sequence(std::span<const double> x, std::span<const double> y);

/// out[i] = y[i + w], zero outside the range. Aligns y onto x when w is the
/// best shift reported by sbd(x, y).
std::vector<double> align(std::span<const double> y, int w);

} // namespace battkit::thermal
