#include "battkit/sbd.hpp"

#include "battkit/error.hpp"

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>

namespace battkit::thermal {

namespace {

constexpr const char* kModule = "thermalwatch";
constexpr double kTieTolerance = 1e-12;

/// Forward/backward plans plus scratch buffers for one padded length. FFTW
/// planning is not thread-safe, so the cache is guarded; execution reuses the
/// per-length buffers under the same lock.
struct FftPlan {
    std::size_t len = 0;
    double* real = nullptr;
    fftw_complex* a = nullptr;
    fftw_complex* b = nullptr;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;

    explicit FftPlan(std::size_t n) : len(n) {
        const std::size_t bins = n / 2 + 1;
        real = static_cast<double*>(fftw_malloc(sizeof(double) * n));
        a = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
        b = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins));
        if (!real || !a || !b) throw std::bad_alloc();
        forward = fftw_plan_dft_r2c_1d(static_cast<int>(n), real, a, FFTW_ESTIMATE);
        backward = fftw_plan_dft_c2r_1d(static_cast<int>(n), a, real, FFTW_ESTIMATE);
    }
    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;
    ~FftPlan() {
        fftw_destroy_plan(forward);
        fftw_destroy_plan(backward);
        fftw_free(real);
        fftw_free(a);
        fftw_free(b);
    }
};

std::mutex g_fft_mutex;

FftPlan& plan_for(std::size_t len) {
    static std::map<std::size_t, std::unique_ptr<FftPlan>> cache;
    auto& slot = cache[len];
    if (!slot) slot = std::make_unique<FftPlan>(len);
    return *slot;
}

std::size_t padded_length(std::size_t n) {
    std::size_t len = 1;
    while (len < 2 * n - 1) len <<= 1;
    return len;
}

} // namespace

ZNormalized znormalize(std::span<const double> values) {
    ZNormalized out;
    out.values.assign(values.size(), 0.0);
    if (values.empty()) {
        out.is_static = true;
        return out;
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double energy = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out.values[i] = values[i] - mean;
        energy += out.values[i] * out.values[i];
    }
    // Spread below round-off of the mean is treated as constant.
    const double floor = 1e-24 * std::max(1.0, mean * mean) * static_cast<double>(values.size());
    if (!(energy > floor)) {
        std::fill(out.values.begin(), out.values.end(), 0.0);
        out.is_static = true;
        return out;
    }
    const double inv = 1.0 / std::sqrt(energy);
    for (auto& v : out.values) v *= inv;
    // Second pass removes the residual mean left by rounding.
    double m2 = 0.0;
    for (double v : out.values) m2 += v;
    m2 /= static_cast<double>(out.values.size());
    double e2 = 0.0;
    for (auto& v : out.values) {
        v -= m2;
        e2 += v * v;
    }
    const double inv2 = 1.0 / std::sqrt(e2);
    for (auto& v : out.values) v *= inv2;
    return out;
}

std::vector<double> ncc_sequence(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n) throw DomainError(kModule, "SBD needs two sequences of equal length >= 2");
    const std::size_t len = padded_length(n);
    std::vector<double> raw(len);
    {
        std::lock_guard<std::mutex> lock(g_fft_mutex);
        FftPlan& p = plan_for(len);
        std::fill(p.real, p.real + len, 0.0);
        std::copy(x.begin(), x.end(), p.real);
        fftw_execute_dft_r2c(p.forward, p.real, p.b);
        std::fill(p.real, p.real + len, 0.0);
        std::copy(y.begin(), y.end(), p.real);
        fftw_execute_dft_r2c(p.forward, p.real, p.a);
        // conj(X) * Y gives r[w] = sum_i x[i] y[i + w].
        for (std::size_t k = 0; k < len / 2 + 1; ++k) {
            const std::complex<double> X(p.b[k][0], -p.b[k][1]);
            const std::complex<double> Y(p.a[k][0], p.a[k][1]);
            const auto z = X * Y;
            p.a[k][0] = z.real();
            p.a[k][1] = z.imag();
        }
        fftw_execute_dft_c2r(p.backward, p.a, p.real);
        std::copy(p.real, p.real + len, raw.begin());
    }
    double nx = 0.0, ny = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        nx += x[i] * x[i];
        ny += y[i] * y[i];
    }
    const double denom = std::sqrt(nx * ny) * static_cast<double>(len);
    if (!(denom > 0.0)) throw DomainError(kModule, "SBD is undefined for an all-zero sequence");
    std::vector<double> out(2 * n - 1);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto w = static_cast<long>(k) - static_cast<long>(n - 1);
        const std::size_t idx = w >= 0 ? static_cast<std::size_t>(w) : len - static_cast<std::size_t>(-w);
        out[k] = raw[idx] / denom;
    }
    return out;
}

SbdResult sbd(std::span<const double> x, std::span<const double> y) {
    if (x.size() < 2 || y.size() != x.size()) throw DomainError(kModule, "SBD needs two sequences of equal length >= 2");
    const auto zx = znormalize(x);
    const auto zy = znormalize(y);
    if (zx.is_static || zy.is_static) throw DomainError(kModule, "SBD is undefined for a constant sequence");
    const auto ncc = ncc_sequence(zx.values, zy.values);
    const long n = static_cast<long>(x.size());
    double best = -2.0;
    for (double v : ncc) best = std::max(best, v);
    int best_w = 0;
    bool found = false;
    // Walk outward from w = 0, negative before positive, and stop at the
    // first value tied with the maximum.
    for (long d = 0; d < n && !found; ++d) {
        for (long w : {-d, d}) {
            if (d == 0 && w > 0) continue;
            if (ncc[static_cast<std::size_t>(w + n - 1)] >= best - kTieTolerance) {
                best_w = static_cast<int>(w);
                found = true;
                break;
            }
        }
    }
    const double value = ncc[static_cast<std::size_t>(best_w + n - 1)];
    SbdResult r;
    r.distance = std::clamp(1.0 - value, 0.0, 2.0);
    r.shift = best_w;
    return r;
}

std::vector<double> align(std::span<const double> y, int w) {
    const long n = static_cast<long>(y.size());
    std::vector<double> out(y.size(), 0.0);
    for (long i = 0; i < n; ++i) {
        const long j = i + w;
        if (j >= 0 && j < n) out[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(j)];
    }
    return out;
}

} // namespace battkit::thermal
