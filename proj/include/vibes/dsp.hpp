#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vibes/texture.hpp"

namespace vibes {

/// Second-order section, transposed direct form II. a0 is normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;
    double z1 = 0.0, z2 = 0.0;

    double process(double x) noexcept {
        const double y = b0 * x + z1;
        z1 = b1 * x - a1 * y + z2;
        z2 = b2 * x - a2 * y;
        return y;
    }
    void reset() noexcept { z1 = z2 = 0.0; }
    /// |H(e^{jw})| at frequency f.
    double magnitude(double f_hz, double rate_hz) const;
};

/// Cascade of biquads; keeps state between calls so a signal can be fed in pieces.
class SosFilter {
public:
    SosFilter() = default;
    explicit SosFilter(std::vector<Biquad> sections) : sections_(std::move(sections)) {}

    double process(double x) noexcept {
        for (auto& s : sections_) x = s.process(x);
        return x;
    }
    void reset() noexcept {
        for (auto& s : sections_) s.reset();
    }
    double magnitude(double f_hz, double rate_hz) const;
    const std::vector<Biquad>& sections() const noexcept { return sections_; }

private:
    std::vector<Biquad> sections_;
};

/// Butterworth designs via the bilinear transform with prewarping. `order` must be even.
std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double rate_hz);
std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz);

/// High-pass of order/2 cascaded with low-pass of order/2 (order 4 = two biquads).
SosFilter make_bandpass(double lo_hz, double hi_hz, double rate_hz, int order = 4);

enum class Reduction { magnitude, dft321 };

std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);

struct PipelineConfig {
    double hp_cutoff_hz = 50.0;
    double lp_cutoff_hz = 500.0;
    int filter_order = 4;
    Reduction reduction = Reduction::magnitude;
    /// Block length used by the streaming DFT321 reducer.
    std::size_t dft321_block = 256;
    double limiter_ceiling = 30.0;  // m/s²
    double scale_k = 0.05;          // duty per m/s²
    double duty_max = 1.0;
    double frame_rate_hz = 1000.0;

    /// Throws ParameterError when the configuration is unusable at `rate_hz`.
    void validate(double rate_hz) const;
};

struct PwmFrame {
    double t = 0.0;
    double duty = 0.0;
};

struct PwmStream {
    std::vector<PwmFrame> frames;
    double frame_rate_hz = 0.0;

    bool operator==(const PwmStream& o) const;
};

void save_pwm(const PwmStream& pwm, const std::filesystem::path& path);
PwmStream load_pwm(const std::filesystem::path& path);

AccelTrace bandpass_filter(const AccelTrace& trace, const PipelineConfig& cfg);

/// Three axes to one. DFT321 works on the whole signal; see ChannelPipeline for the blocked streaming form.
std::vector<double> reduce_3to1(const AccelTrace& trace, Reduction method);

/// Spectral 3-to-1 reduction: magnitude is the root-sum-square of the axis spectra, phase is that of their sum.
std::vector<double> dft321(std::span<const double> ax, std::span<const double> ay, std::span<const double> az);

/// Sign-preserving clamp to [-ceiling, ceiling]; NaN maps to 0.
double limit_sample(double x, double ceiling) noexcept;
std::vector<double> limit(std::span<const double> signal, double ceiling);

double duty_for(double y, const PipelineConfig& cfg) noexcept;

/// Pointwise duty, mean-pooled over windows of rate_hz / frame_rate_hz samples.
PwmStream encode_pwm(std::span<const double> signal, double rate_hz, const PipelineConfig& cfg);

struct RoutedChannels {
    PwmStream left;
    PwmStream right;
};

/// Index finger drives the left actuator, thumb the right. A missing thumb yields an all-zero right stream.
RoutedChannels route_channels(const PwmStream& index_stream, const std::optional<PwmStream>& thumb_stream);

/// Centered mean over an odd window, truncated at the edges.
std::vector<double> moving_average(std::span<const double> signal, std::size_t window);

/// Output of one channel: the drive stream plus the limited scalar signal it was encoded from.
struct ChannelOutput {
    PwmStream pwm;
    std::vector<double> carrier;
    double rate_hz = 0.0;
};

/// Stateful single-channel pipeline: band-pass -> reduce -> limit -> PWM.
/// Feeding a trace in chunks of any size gives the same result as one call.
class ChannelPipeline {
public:
    ChannelPipeline(const PipelineConfig& cfg, double rate_hz);

    void push(std::span<const AccelSample> chunk);
    /// Flushes partially filled DFT321 blocks and PWM frames. Further pushes are an error.
    ChannelOutput finish();

private:
    void emit_reduced(double y);

    PipelineConfig cfg_;
    double rate_hz_;
    std::size_t pool_;
    std::array<SosFilter, 3> filters_;
    std::array<std::vector<double>, 3> block_;
    bool started_ = false;
    bool finished_ = false;
    double t0_ = 0.0;
    double pool_sum_ = 0.0;
    std::size_t pool_count_ = 0;
    ChannelOutput out_;
};

/// Whole-trace processing; chunk = 0 feeds the trace in one piece.
ChannelOutput process_trace(const AccelTrace& trace, const PipelineConfig& cfg, std::size_t chunk = 0);

/// scale_k that maps the largest limited sample of `traces` to 0.9 * duty_max.
double calibrate_scale_k(std::span<const AccelTrace> traces, const PipelineConfig& cfg);

}  // namespace vibes
