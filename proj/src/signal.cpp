#include "battkit/signal.hpp"

#include "battkit/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

namespace battkit::signal {

namespace {

constexpr const char* kModule = "signal";

/// Least-squares projection onto polynomials of degree `order` sampled at
/// offsets -half..half. Row r gives the weights that evaluate the fit at
/// offset r - half.
Eigen::MatrixXd savgol_projection(std::size_t window, std::size_t order) {
    const auto half = static_cast<int>(window / 2);
    Eigen::MatrixXd A(window, order + 1);
    for (int i = -half; i <= half; ++i) {
        double p = 1.0;
        for (std::size_t j = 0; j <= order; ++j) {
            A(i + half, static_cast<Eigen::Index>(j)) = p;
            p *= static_cast<double>(i);
        }
    }
    // Hat matrix A (A^T A)^-1 A^T.
    Eigen::MatrixXd pinv = (A.transpose() * A).ldlt().solve(A.transpose());
    return A * pinv;
}

void check_window(std::size_t window, std::size_t order) {
    if (window % 2 == 0 || window <= order) throw DomainError(kModule, "Savitzky-Golay window must be odd and exceed the order");
}

std::vector<std::size_t> topographic_prominence(std::span<const double> y, std::size_t lo, std::size_t hi,
                                                std::vector<Extremum>& out) {
    // Candidates: strict local maxima in [lo+1, hi-1]; plateaus resolved to their left edge.
    std::vector<std::size_t> cand;
    for (std::size_t i = lo + 1; i + 1 <= hi; ++i) {
        if (!(y[i] > y[i - 1])) continue;
        std::size_t j = i;
        while (j + 1 <= hi && y[j + 1] == y[i]) ++j;
        if (j + 1 <= hi && y[j + 1] < y[i]) cand.push_back(i);
        i = j;
    }
    for (auto i : cand) {
        double left_min = y[i];
        for (std::size_t k = i; k-- > lo;) {
            if (y[k] > y[i]) break;
            left_min = std::min(left_min, y[k]);
        }
        double right_min = y[i];
        for (std::size_t k = i + 1; k <= hi; ++k) {
            if (y[k] > y[i]) break;
            right_min = std::min(right_min, y[k]);
        }
        out.push_back({i, y[i], y[i] - std::max(left_min, right_min)});
    }
    return cand;
}

} // namespace

std::vector<double> savgol_coefficients(std::size_t window, std::size_t order) {
    check_window(window, order);
    Eigen::MatrixXd H = savgol_projection(window, order);
    const auto half = static_cast<Eigen::Index>(window / 2);
    std::vector<double> c(window);
    for (std::size_t k = 0; k < window; ++k) c[k] = H(half, static_cast<Eigen::Index>(k));
    return c;
}

std::vector<double> savitzky_golay(std::span<const double> y, std::size_t window, std::size_t order) {
    check_window(window, order);
    const std::size_t n = y.size();
    if (n < window) throw DomainError(kModule, "signal shorter than the Savitzky-Golay window");
    const Eigen::MatrixXd H = savgol_projection(window, order);
    const std::size_t half = window / 2;
    std::vector<double> out(n, 0.0);
    for (std::size_t i = half; i + half < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < window; ++k) acc += H(static_cast<Eigen::Index>(half), static_cast<Eigen::Index>(k)) * y[i - half + k];
        out[i] = acc;
    }
    for (std::size_t i = 0; i < half; ++i) {
        double head = 0.0, tail = 0.0;
        for (std::size_t k = 0; k < window; ++k) {
            head += H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) * y[k];
            tail += H(static_cast<Eigen::Index>(window - 1 - i), static_cast<Eigen::Index>(k)) * y[n - window + k];
        }
        out[i] = head;
        out[n - 1 - i] = tail;
    }
    return out;
}

std::vector<Extremum> find_peaks(std::span<const double> y, const PeakConfig& config, std::span<const bool> mask) {
    if (!mask.empty() && mask.size() != y.size()) throw DomainError(kModule, "peak mask length mismatch");
    std::vector<Extremum> all;
    std::size_t i = 0;
    const std::size_t n = y.size();
    while (i < n) {
        while (i < n && !mask.empty() && mask[i]) ++i;
        std::size_t j = i;
        while (j < n && (mask.empty() || !mask[j])) ++j;
        if (j > i + 2) topographic_prominence(y, i, j - 1, all);
        i = j;
    }

    std::vector<Extremum> kept;
    for (const auto& e : all)
        if (e.prominence > config.min_prominence) kept.push_back(e);

    if (config.min_separation > 1 && kept.size() > 1) {
        std::vector<Extremum> by_prom = kept;
        std::stable_sort(by_prom.begin(), by_prom.end(),
                         [](const Extremum& a, const Extremum& b) { return a.prominence > b.prominence; });
        std::vector<Extremum> chosen;
        for (const auto& e : by_prom) {
            bool clash = std::any_of(chosen.begin(), chosen.end(), [&](const Extremum& c) {
                const auto d = e.index > c.index ? e.index - c.index : c.index - e.index;
                return d < config.min_separation;
            });
            if (!clash) chosen.push_back(e);
        }
        std::sort(chosen.begin(), chosen.end(), [](const Extremum& a, const Extremum& b) { return a.index < b.index; });
        kept = std::move(chosen);
    }
    return kept;
}

std::vector<Extremum> find_valleys(std::span<const double> y, const PeakConfig& config, std::span<const bool> mask) {
    std::vector<double> neg(y.begin(), y.end());
    for (auto& v : neg) v = -v;
    auto out = find_peaks(neg, config, mask);
    for (auto& e : out) e.height = -e.height;
    return out;
}

double median(std::vector<double> values) {
    if (values.empty()) throw DomainError(kModule, "median of an empty set");
    const auto mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    double m = values[mid];
    if (values.size() % 2 == 0) {
        const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
        m = 0.5 * (m + lower);
    }
    return m;
}

double interp(std::span<const double> x, std::span<const double> y, double at) {
    if (x.empty() || x.size() != y.size()) throw DomainError(kModule, "interp needs matching non-empty arrays");
    if (at <= x.front()) return y.front();
    if (at >= x.back()) return y.back();
    const auto it = std::upper_bound(x.begin(), x.end(), at);
    const auto k = static_cast<std::size_t>(it - x.begin());
    const double w = (at - x[k - 1]) / (x[k] - x[k - 1]);
    return y[k - 1] + w * (y[k] - y[k - 1]);
}

} // namespace battkit::signal
