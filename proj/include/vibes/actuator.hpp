#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vibes/dsp.hpp"
#include "vibes/texture.hpp"

namespace vibes {

/// Linear model of a voice-coil vibrotactile actuator: Butterworth band-pass, gain and additive noise.
struct ActuatorModel {
    double band_lo_hz = 50.0;
    double band_hi_hz = 500.0;
    double gain = 10.0;  // m/s² per unit duty
    int order = 4;
    double noise_floor_rms = 0.01;  // m/s²

    void validate() const;
    /// Magnitude of the band-pass alone at f, for a signal sampled at rate_hz.
    double band_gain(double f_hz, double rate_hz) const;
};

/// Renders `drive` onto `carrier` (sampled at carrier_rate_hz). Each duty frame is held over its
/// carrier samples; the carrier is normalized to unit sinusoidal amplitude (divided by sqrt(2)*RMS).
/// The result is a single-axis trace (x axis) at the carrier rate.
AccelTrace render(const PwmStream& drive, const ActuatorModel& model, std::span<const double> carrier,
                  double carrier_rate_hz, std::uint64_t seed);

/// The noise-free part of render().
AccelTrace render_clean(const PwmStream& drive, const ActuatorModel& model, std::span<const double> carrier,
                        double carrier_rate_hz);

/// Adds N(0, noise_rms²) to the x axis; render() = render_clean() followed by add_noise().
void add_noise(AccelTrace& trace, double noise_rms, std::uint64_t seed);

AccelTrace render(const ChannelOutput& channel, const ActuatorModel& model, std::uint64_t seed);

/// RMS of the x axis of a single-axis trace.
double rms_x(const AccelTrace& trace);

struct RenderComparison {
    double rms_error = 0.0;
    double spectral_coherence_mean = 0.0;
    double envelope_correlation = 0.0;
};

struct CompareOptions {
    std::size_t welch_segment = 256;
    double band_lo_hz = 50.0;
    double band_hi_hz = 500.0;
    double envelope_window_s = 0.020;
};

/// Per-bin magnitude-squared coherence (Welch, Hann, 50% overlap). Index k is frequency k*rate/segment.
std::vector<double> coherence(std::span<const double> x, std::span<const double> y, std::size_t segment);

/// Centered moving RMS over an odd window.
std::vector<double> moving_rms(std::span<const double> x, std::size_t window);

double pearson(std::span<const double> x, std::span<const double> y);

/// Similarity between a reference scalar signal s and a rendering r at the same rate.
/// Lengths may differ by up to 10% (the shorter is linearly resampled); beyond that ValidationError.
RenderComparison compare_render(std::span<const double> s, std::span<const double> r, double rate_hz,
                                const CompareOptions& opts = {});

}  // namespace vibes
