#include "vibes/actuator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "vibes/errors.hpp"
#include "vibes/rng.hpp"
#include "vibes/spectral.hpp"

namespace vibes {

void ActuatorModel::validate() const {
    if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz)) throw ParameterError("actuator band must satisfy 0 < lo < hi");
    if (!(gain > 0.0)) throw ParameterError("actuator gain must be positive");
    if (!(noise_floor_rms >= 0.0)) throw ParameterError("actuator noise floor must be >= 0");
    if (order < 4 || order % 4 != 0) throw ParameterError("actuator order must be a multiple of 4");
}

double ActuatorModel::band_gain(double f_hz, double rate_hz) const {
    return make_bandpass(band_lo_hz, band_hi_hz, rate_hz, order).magnitude(f_hz, rate_hz);
}

double rms_x(const AccelTrace& trace) {
    if (trace.empty()) return 0.0;
    double s = 0.0;
    for (const auto& v : trace.samples) s += v.ax * v.ax;
    return std::sqrt(s / static_cast<double>(trace.size()));
}

AccelTrace render_clean(const PwmStream& drive, const ActuatorModel& model, std::span<const double> carrier,
                        double carrier_rate_hz) {
    model.validate();
    if (drive.frame_rate_hz < 2.0 * model.band_hi_hz)
        throw ParameterError("drive frame rate must be at least twice the actuator's upper band edge");
    auto filter = make_bandpass(model.band_lo_hz, model.band_hi_hz, carrier_rate_hz, model.order);

    double power = 0.0;
    for (double c : carrier) power += c * c;
    const double crms = carrier.empty() ? 0.0 : std::sqrt(power / static_cast<double>(carrier.size()));
    const double norm = crms > 0.0 ? 1.0 / (std::sqrt(2.0) * crms) : 0.0;

    AccelTrace out;
    out.rate_hz = carrier_rate_hz;
    out.samples.resize(carrier.size());
    const double frames_per_sample = drive.frame_rate_hz / carrier_rate_hz;
    for (std::size_t i = 0; i < carrier.size(); ++i) {
        const auto frame = static_cast<std::size_t>(std::floor(static_cast<double>(i) * frames_per_sample + 1e-9));
        const double duty = frame < drive.frames.size() ? drive.frames[frame].duty : 0.0;
        out.samples[i] = {static_cast<double>(i) / carrier_rate_hz, filter.process(model.gain * duty * carrier[i] * norm),
                          0.0, 0.0};
    }
    return out;
}

void add_noise(AccelTrace& trace, double noise_rms, std::uint64_t seed) {
    if (!(noise_rms > 0.0)) return;
    Rng rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (auto& s : trace.samples) s.ax += noise_rms * gauss(rng);
}

AccelTrace render(const PwmStream& drive, const ActuatorModel& model, std::span<const double> carrier,
                  double carrier_rate_hz, std::uint64_t seed) {
    auto out = render_clean(drive, model, carrier, carrier_rate_hz);
    add_noise(out, model.noise_floor_rms, seed);
    return out;
}

AccelTrace render(const ChannelOutput& channel, const ActuatorModel& model, std::uint64_t seed) {
    return render(channel.pwm, model, channel.carrier, channel.rate_hz, seed);
}

std::vector<double> coherence(std::span<const double> x, std::span<const double> y, std::size_t segment) {
    if (x.size() != y.size()) throw ParameterError("coherence inputs differ in length");
    segment = std::min(segment, x.size());
    if (segment < 2) throw ParameterError("signals too short for coherence");
    const std::size_t hop = std::max<std::size_t>(segment / 2, 1);
    const auto w = hann_window(segment);
    const std::size_t bins = segment / 2 + 1;
    std::vector<double> sxx(bins, 0.0), syy(bins, 0.0);
    std::vector<std::complex<double>> sxy(bins);
    std::vector<double> bx(segment), by(segment);
    for (std::size_t off = 0; off + segment <= x.size(); off += hop) {
        for (std::size_t i = 0; i < segment; ++i) {
            bx[i] = x[off + i] * w[i];
            by[i] = y[off + i] * w[i];
        }
        const auto fx = rfft(bx);
        const auto fy = rfft(by);
        for (std::size_t k = 0; k < bins; ++k) {
            sxx[k] += std::norm(fx[k]);
            syy[k] += std::norm(fy[k]);
            sxy[k] += fx[k] * std::conj(fy[k]);
        }
    }
    std::vector<double> c(bins, 0.0);
    for (std::size_t k = 0; k < bins; ++k) {
        const double den = sxx[k] * syy[k];
        if (den > 0.0) c[k] = std::clamp(std::norm(sxy[k]) / den, 0.0, 1.0);
    }
    return c;
}

std::vector<double> moving_rms(std::span<const double> x, std::size_t window) {
    std::vector<double> sq(x.size());
    std::transform(x.begin(), x.end(), sq.begin(), [](double v) { return v * v; });
    auto m = moving_average(sq, window);
    for (auto& v : m) v = std::sqrt(v);
    return m;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return 0.0;
    const double mx = std::accumulate(x.begin(), x.begin() + n, 0.0) / static_cast<double>(n);
    const double my = std::accumulate(y.begin(), y.begin() + n, 0.0) / static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0 && syy > 0.0)) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

namespace {

std::vector<double> resample_linear(std::span<const double> x, std::size_t n) {
    std::vector<double> out(n);
    if (x.size() == 1 || n == 1) {
        std::fill(out.begin(), out.end(), x.front());
        return out;
    }
    const double step = static_cast<double>(x.size() - 1) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * step;
        const auto j = std::min(static_cast<std::size_t>(pos), x.size() - 2);
        const double frac = pos - static_cast<double>(j);
        out[i] = x[j] * (1.0 - frac) + x[j + 1] * frac;
    }
    return out;
}

}  // namespace

RenderComparison compare_render(std::span<const double> s_in, std::span<const double> r_in, double rate_hz,
                                const CompareOptions& opts) {
    if (s_in.empty() || r_in.empty()) throw ParameterError("compare_render needs non-empty signals");
    const std::size_t longest = std::max(s_in.size(), r_in.size());
    const std::size_t shortest = std::min(s_in.size(), r_in.size());
    if (static_cast<double>(longest - shortest) > 0.1 * static_cast<double>(longest))
        throw ValidationError("signal durations differ by more than 10%");
    std::vector<double> s(s_in.begin(), s_in.end());
    std::vector<double> r(r_in.begin(), r_in.end());
    if (s.size() < longest) s = resample_linear(s_in, longest);
    if (r.size() < longest) r = resample_linear(r_in, longest);

    RenderComparison cmp;

    double sr = 0.0, rr = 0.0;
    for (std::size_t i = 0; i < longest; ++i) {
        sr += s[i] * r[i];
        rr += r[i] * r[i];
    }
    const double g = rr > 0.0 ? sr / rr : 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i < longest; ++i) err += (s[i] - g * r[i]) * (s[i] - g * r[i]);
    cmp.rms_error = std::sqrt(err / static_cast<double>(longest));

    const std::size_t seg = std::min(opts.welch_segment, longest);
    const auto c = coherence(s, r, seg);
    double csum = 0.0;
    std::size_t ccount = 0;
    for (std::size_t k = 0; k < c.size(); ++k) {
        const double f = static_cast<double>(k) * rate_hz / static_cast<double>(seg);
        if (f >= opts.band_lo_hz && f <= opts.band_hi_hz) {
            csum += c[k];
            ++ccount;
        }
    }
    if (ccount == 0) throw ParameterError("no coherence bins inside the comparison band");
    cmp.spectral_coherence_mean = csum / static_cast<double>(ccount);

    auto window = static_cast<std::size_t>(std::llround(opts.envelope_window_s * rate_hz));
    if (window % 2 == 0) ++window;
    cmp.envelope_correlation = pearson(moving_rms(s, window), moving_rms(r, window));
    return cmp;
}

}  // namespace vibes
