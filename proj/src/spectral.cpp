#include "vibes/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace vibes {
namespace {

// FFTW's planner is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwDeleter {
    void operator()(void* p) const noexcept { fftw_free(p); }
};

template <typename T>
using FftwBuffer = std::unique_ptr<T, FftwDeleter>;

struct PlanPair {
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
};

// Plans are cached per length for the lifetime of the process.
PlanPair plans_for(std::size_t n) {
    static std::map<std::size_t, PlanPair> cache;
    std::lock_guard lock(planner_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    FftwBuffer<double> real(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    FftwBuffer<fftw_complex> cplx(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    const int len = static_cast<int>(n);
    PlanPair p;
    p.forward = fftw_plan_dft_r2c_1d(len, real.get(), cplx.get(), FFTW_ESTIMATE);
    p.backward = fftw_plan_dft_c2r_1d(len, cplx.get(), real.get(), FFTW_ESTIMATE);
    cache.emplace(n, p);
    return p;
}

}  // namespace

Spectrum rfft(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n == 0) return {};
    const auto plan = plans_for(n);
    FftwBuffer<double> in(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    FftwBuffer<fftw_complex> out(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    std::copy(x.begin(), x.end(), in.get());
    fftw_execute_dft_r2c(plan.forward, in.get(), out.get());
    Spectrum spec(n / 2 + 1);
    for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = {out.get()[k][0], out.get()[k][1]};
    return spec;
}

std::vector<double> irfft(std::span<const std::complex<double>> spec, std::size_t n) {
    if (n == 0) return {};
    const auto plan = plans_for(n);
    FftwBuffer<fftw_complex> in(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1))));
    FftwBuffer<double> out(static_cast<double*>(fftw_malloc(sizeof(double) * n)));
    for (std::size_t k = 0; k < n / 2 + 1; ++k) {
        const auto v = k < spec.size() ? spec[k] : std::complex<double>{};
        in.get()[k][0] = v.real();
        in.get()[k][1] = v.imag();
    }
    // c2r destroys its input, which is our private copy.
    fftw_execute_dft_c2r(plan.backward, in.get(), out.get());
    std::vector<double> x(out.get(), out.get() + n);
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : x) v *= inv;
    return x;
}

std::vector<double> hann_window(std::size_t n) {
    std::vector<double> w(n, 1.0);
    if (n < 2) return w;
    for (std::size_t i = 0; i < n; ++i)
        w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n)));
    return w;
}

double band_power_fraction(std::span<const double> x, double rate_hz, double lo_hz, double hi_hz) {
    const auto spec = rfft(x);
    const double n = static_cast<double>(x.size());
    double total = 0.0;
    double inband = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = static_cast<double>(k) * rate_hz / n;
        const bool edge = k == 0 || (x.size() % 2 == 0 && k == spec.size() - 1);
        const double p = std::norm(spec[k]) * (edge ? 1.0 : 2.0);
        total += p;
        if (f >= lo_hz && f <= hi_hz) inband += p;
    }
    return total > 0.0 ? inband / total : 0.0;
}

}  // namespace vibes
