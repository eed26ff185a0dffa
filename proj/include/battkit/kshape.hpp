#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace battkit::thermal {

/// Centroid maximising the summed squared normalised cross-correlation with
/// the members after aligning each to `reference` (skipped when `reference`
/// is empty or all zero). Returns a z-normalised vector, or zeros when there
/// are no members. Sign: positive summed correlation with the aligned
/// members, then positive correlation with `reference`, then a positive first
/// non-zero element.
std::vector<double> shape_extract(std::span<const std::vector<double>> members,
                                  std::span<const double> reference);

struct KShapeConfig {
    std::size_t k = 2;
    std::size_t max_iterations = 100;
    /// Independent random initialisations; the lowest objective wins.
    std::size_t restarts = 1;
    std::uint64_t seed = 1;
};

struct KShapeResult {
    std::vector<std::vector<double>> centroids;
    std::vector<std::size_t> labels;
    /// SBD of every series to its assigned centroid.
    std::vector<double> distances;
    /// Sum of `distances`.
    double objective = 0.0;
    /// Objective after every completed iteration of the winning restart.
    std::vector<double> objective_history;
    std::size_t iterations = 0;
    /// "converged", "max_iterations" or "objective_increase".
    std::string stop_reason;
};

/// k-Shape clustering of equal-length, non-constant series. Throws
/// DomainError when k is zero, exceeds the number of series, lengths differ,
/// or a series is constant.
KShapeResult kshape_cluster(std::span<const std::vector<double>> series, const KShapeConfig& config);

} // namespace battkit::thermal
