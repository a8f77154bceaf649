#pragma once

#include <complex>
#include <span>
#include <vector>

namespace vibes {

using Spectrum = std::vector<std::complex<double>>;

/// Real-to-half-complex DFT, n/2+1 bins, unnormalized.
Spectrum rfft(std::span<const double> x);

/// Inverse of rfft for a length-n signal (includes the 1/n factor).
std::vector<double> irfft(std::span<const std::complex<double>> spec, std::size_t n);

std::vector<double> hann_window(std::size_t n);

/// Fraction of one-sided periodogram power in [lo_hz, hi_hz].
double band_power_fraction(std::span<const double> x, double rate_hz, double lo_hz, double hi_hz);

}  // namespace vibes
