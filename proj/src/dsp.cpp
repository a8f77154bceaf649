#include "vibes/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <limits>
#include <numbers>

#include "text.hpp"
#include "vibes/errors.hpp"
#include "vibes/spectral.hpp"

namespace vibes {

double Biquad::magnitude(double f_hz, double rate_hz) const {
    const double w = 2.0 * std::numbers::pi * f_hz / rate_hz;
    const std::complex<double> z1 = std::polar(1.0, -w);
    const std::complex<double> z2 = z1 * z1;
    return std::abs((b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2));
}

double SosFilter::magnitude(double f_hz, double rate_hz) const {
    double m = 1.0;
    for (const auto& s : sections_) m *= s.magnitude(f_hz, rate_hz);
    return m;
}

namespace {

void check_design(int order, double cutoff_hz, double rate_hz) {
    if (order < 2 || order % 2 != 0) throw ParameterError("Butterworth order must be even and >= 2");
    if (!(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0))
        throw ParameterError("cutoff " + text::num(cutoff_hz) + " Hz must lie in (0, Nyquist)");
}

// Pole-pair quality factors of an even-order Butterworth prototype.
std::vector<double> butterworth_q(int order) {
    std::vector<double> q;
    for (int k = 1; k <= order / 2; ++k) {
        const double theta = std::numbers::pi * (2.0 * k - 1.0) / (2.0 * order);
        q.push_back(1.0 / (2.0 * std::cos(theta)));
    }
    return q;
}

}  // namespace

std::vector<Biquad> butterworth_lowpass(int order, double cutoff_hz, double rate_hz) {
    check_design(order, cutoff_hz, rate_hz);
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    std::vector<Biquad> out;
    for (double q : butterworth_q(order)) {
        const double norm = 1.0 / (1.0 + k / q + k * k);
        Biquad b;
        b.b0 = k * k * norm;
        b.b1 = 2.0 * b.b0;
        b.b2 = b.b0;
        b.a1 = 2.0 * (k * k - 1.0) * norm;
        b.a2 = (1.0 - k / q + k * k) * norm;
        out.push_back(b);
    }
    return out;
}

std::vector<Biquad> butterworth_highpass(int order, double cutoff_hz, double rate_hz) {
    check_design(order, cutoff_hz, rate_hz);
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    std::vector<Biquad> out;
    for (double q : butterworth_q(order)) {
        const double norm = 1.0 / (1.0 + k / q + k * k);
        Biquad b;
        b.b0 = norm;
        b.b1 = -2.0 * norm;
        b.b2 = norm;
        b.a1 = 2.0 * (k * k - 1.0) * norm;
        b.a2 = (1.0 - k / q + k * k) * norm;
        out.push_back(b);
    }
    return out;
}

SosFilter make_bandpass(double lo_hz, double hi_hz, double rate_hz, int order) {
    if (order < 4 || order % 4 != 0) throw ParameterError("band-pass order must be a multiple of 4");
    if (!(lo_hz < hi_hz)) throw ParameterError("band-pass requires lo < hi");
    auto sections = butterworth_highpass(order / 2, lo_hz, rate_hz);
    auto lp = butterworth_lowpass(order / 2, hi_hz, rate_hz);
    sections.insert(sections.end(), lp.begin(), lp.end());
    return SosFilter(std::move(sections));
}

std::string to_string(Reduction r) { return r == Reduction::magnitude ? "magnitude" : "dft321"; }

Reduction reduction_from_string(const std::string& s) {
    if (s == "magnitude") return Reduction::magnitude;
    if (s == "dft321") return Reduction::dft321;
    throw ParameterError("unknown reduction '" + s + "' (expected magnitude or dft321)");
}

void PipelineConfig::validate(double rate_hz) const {
    if (!(hp_cutoff_hz > 0.0 && hp_cutoff_hz < lp_cutoff_hz && lp_cutoff_hz < rate_hz / 2.0))
        throw ParameterError("cutoffs must satisfy 0 < hp < lp < rate/2 (rate " + text::num(rate_hz) + " Hz)");
    if (filter_order < 4 || filter_order % 4 != 0) throw ParameterError("filter_order must be a multiple of 4");
    if (!(scale_k > 0.0)) throw ParameterError("scale_k must be positive");
    if (!(duty_max > 0.0 && duty_max <= 1.0)) throw ParameterError("duty_max must lie in (0, 1]");
    if (!(limiter_ceiling > 0.0)) throw ParameterError("limiter ceiling must be positive");
    if (reduction == Reduction::dft321 && dft321_block < 2) throw ParameterError("dft321_block must be >= 2");
    if (!(frame_rate_hz > 0.0 && frame_rate_hz <= rate_hz)) throw ParameterError("frame rate must lie in (0, rate]");
    const double ratio = rate_hz / frame_rate_hz;
    if (std::abs(ratio - std::round(ratio)) > 1e-9)
        throw ParameterError("sample rate must be an integer multiple of the PWM frame rate");
}

bool PwmStream::operator==(const PwmStream& o) const {
    if (frame_rate_hz != o.frame_rate_hz || frames.size() != o.frames.size()) return false;
    for (std::size_t i = 0; i < frames.size(); ++i)
        if (frames[i].t != o.frames[i].t || frames[i].duty != o.frames[i].duty) return false;
    return true;
}

void save_pwm(const PwmStream& pwm, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "t,duty\n";
    for (const auto& f : pwm.frames) out << text::num(f.t) << ',' << text::num(f.duty) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

PwmStream load_pwm(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 1;
    if (!std::getline(in, line) || text::trim(line) != "t,duty") throw ParseError("expected header 't,duty'", 1);
    PwmStream pwm;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        auto f = text::split(line, ',');
        if (f.size() != 2) throw ParseError("expected 2 columns", lineno);
        pwm.frames.push_back({text::parse_double(f[0], lineno), text::parse_double(f[1], lineno)});
    }
    if (pwm.frames.size() >= 2) {
        const double dt = pwm.frames[1].t - pwm.frames[0].t;
        if (dt > 0.0) pwm.frame_rate_hz = std::round(1.0 / dt * 1e6) / 1e6;
    }
    return pwm;
}

AccelTrace bandpass_filter(const AccelTrace& trace, const PipelineConfig& cfg) {
    cfg.validate(trace.rate_hz);
    std::array<SosFilter, 3> f;
    f.fill(make_bandpass(cfg.hp_cutoff_hz, cfg.lp_cutoff_hz, trace.rate_hz, cfg.filter_order));
    AccelTrace out = trace;
    for (auto& s : out.samples) {
        s.ax = f[0].process(s.ax);
        s.ay = f[1].process(s.ay);
        s.az = f[2].process(s.az);
    }
    return out;
}

std::vector<double> dft321(std::span<const double> ax, std::span<const double> ay, std::span<const double> az) {
    const std::size_t n = ax.size();
    if (ay.size() != n || az.size() != n) throw ParameterError("dft321 axes differ in length");
    if (n == 0) return {};
    const auto X = rfft(ax);
    const auto Y = rfft(ay);
    const auto Z = rfft(az);
    Spectrum out(X.size());
    for (std::size_t k = 0; k < X.size(); ++k) {
        const double mag = std::sqrt(std::norm(X[k]) + std::norm(Y[k]) + std::norm(Z[k]));
        const auto sum = X[k] + Y[k] + Z[k];
        const bool real_bin = k == 0 || (n % 2 == 0 && k == X.size() - 1);
        if (real_bin) {
            // DC and Nyquist bins of a real signal are real; keep the sign of the summed axes.
            out[k] = sum.real() < 0.0 ? -mag : mag;
        } else {
            const double phase = std::abs(sum) > 0.0 ? std::arg(sum) : 0.0;
            out[k] = std::polar(mag, phase);
        }
    }
    return irfft(out, n);
}

std::vector<double> reduce_3to1(const AccelTrace& trace, Reduction method) {
    if (trace.empty()) throw ParameterError("cannot reduce an empty trace");
    if (method == Reduction::magnitude) return magnitude(trace);
    std::vector<double> ax(trace.size()), ay(trace.size()), az(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        ax[i] = trace.samples[i].ax;
        ay[i] = trace.samples[i].ay;
        az[i] = trace.samples[i].az;
    }
    return dft321(ax, ay, az);
}

double limit_sample(double x, double ceiling) noexcept {
    if (std::isnan(x)) return 0.0;
    return std::clamp(x, -ceiling, ceiling);
}

std::vector<double> limit(std::span<const double> signal, double ceiling) {
    if (!(ceiling > 0.0)) throw ParameterError("limiter ceiling must be positive");
    std::vector<double> out(signal.size());
    std::transform(signal.begin(), signal.end(), out.begin(), [&](double x) { return limit_sample(x, ceiling); });
    return out;
}

double duty_for(double y, const PipelineConfig& cfg) noexcept {
    const double a = std::abs(y);
    if (std::isnan(a)) return 0.0;
    if (a >= cfg.duty_max / cfg.scale_k) return cfg.duty_max;
    return std::min(cfg.scale_k * a, cfg.duty_max);
}

PwmStream encode_pwm(std::span<const double> signal, double rate_hz, const PipelineConfig& cfg) {
    if (!(cfg.scale_k > 0.0)) throw ParameterError("scale_k must be positive");
    if (!(cfg.frame_rate_hz > 0.0 && cfg.frame_rate_hz <= rate_hz)) throw ParameterError("frame rate must lie in (0, rate]");
    const auto pool = static_cast<std::size_t>(std::llround(rate_hz / cfg.frame_rate_hz));
    PwmStream pwm;
    pwm.frame_rate_hz = cfg.frame_rate_hz;
    double sum = 0.0;
    std::size_t count = 0;
    for (double y : signal) {
        sum += duty_for(y, cfg);
        if (++count == pool) {
            pwm.frames.push_back({static_cast<double>(pwm.frames.size()) / cfg.frame_rate_hz, sum / static_cast<double>(count)});
            sum = 0.0;
            count = 0;
        }
    }
    if (count > 0)
        pwm.frames.push_back({static_cast<double>(pwm.frames.size()) / cfg.frame_rate_hz, sum / static_cast<double>(count)});
    return pwm;
}

RoutedChannels route_channels(const PwmStream& index_stream, const std::optional<PwmStream>& thumb_stream) {
    if (!thumb_stream) {
        PwmStream silent = index_stream;
        for (auto& f : silent.frames) f.duty = 0.0;
        return {index_stream, silent};
    }
    if (thumb_stream->frame_rate_hz != index_stream.frame_rate_hz)
        throw ParameterError("index and thumb streams must share a frame rate");
    return {index_stream, *thumb_stream};
}

std::vector<double> moving_average(std::span<const double> signal, std::size_t window) {
    if (window == 0 || window % 2 == 0) throw ParameterError("moving-average window must be odd and >= 1");
    const std::size_t n = signal.size();
    const std::size_t half = window / 2;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(n - 1, i + half);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += signal[j];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

ChannelPipeline::ChannelPipeline(const PipelineConfig& cfg, double rate_hz) : cfg_(cfg), rate_hz_(rate_hz) {
    cfg_.validate(rate_hz);
    pool_ = static_cast<std::size_t>(std::llround(rate_hz / cfg.frame_rate_hz));
    filters_.fill(make_bandpass(cfg.hp_cutoff_hz, cfg.lp_cutoff_hz, rate_hz, cfg.filter_order));
    out_.pwm.frame_rate_hz = cfg.frame_rate_hz;
    out_.rate_hz = rate_hz;
}

void ChannelPipeline::emit_reduced(double y) {
    y = limit_sample(y, cfg_.limiter_ceiling);
    out_.carrier.push_back(y);
    pool_sum_ += duty_for(y, cfg_);
    if (++pool_count_ == pool_) {
        out_.pwm.frames.push_back({t0_ + static_cast<double>(out_.pwm.frames.size()) / cfg_.frame_rate_hz,
                                   pool_sum_ / static_cast<double>(pool_count_)});
        pool_sum_ = 0.0;
        pool_count_ = 0;
    }
}

void ChannelPipeline::push(std::span<const AccelSample> chunk) {
    if (finished_) throw std::logic_error("ChannelPipeline::push after finish");
    if (!chunk.empty() && !started_) {
        t0_ = chunk.front().t;
        started_ = true;
    }
    for (const auto& s : chunk) {
        const double x = filters_[0].process(s.ax);
        const double y = filters_[1].process(s.ay);
        const double z = filters_[2].process(s.az);
        if (cfg_.reduction == Reduction::magnitude) {
            emit_reduced(std::sqrt(x * x + y * y + z * z));
            continue;
        }
        block_[0].push_back(x);
        block_[1].push_back(y);
        block_[2].push_back(z);
        if (block_[0].size() == cfg_.dft321_block) {
            for (double v : dft321(block_[0], block_[1], block_[2])) emit_reduced(v);
            for (auto& b : block_) b.clear();
        }
    }
}

ChannelOutput ChannelPipeline::finish() {
    if (finished_) throw std::logic_error("ChannelPipeline::finish called twice");
    finished_ = true;
    if (!block_[0].empty()) {
        for (double v : dft321(block_[0], block_[1], block_[2])) emit_reduced(v);
        for (auto& b : block_) b.clear();
    }
    if (pool_count_ > 0) {
        out_.pwm.frames.push_back({t0_ + static_cast<double>(out_.pwm.frames.size()) / cfg_.frame_rate_hz,
                                   pool_sum_ / static_cast<double>(pool_count_)});
        pool_sum_ = 0.0;
        pool_count_ = 0;
    }
    return std::move(out_);
}

ChannelOutput process_trace(const AccelTrace& trace, const PipelineConfig& cfg, std::size_t chunk) {
    ChannelPipeline pipe(cfg, trace.rate_hz);
    std::span<const AccelSample> all(trace.samples);
    if (chunk == 0) chunk = std::max<std::size_t>(all.size(), 1);
    for (std::size_t off = 0; off < all.size(); off += chunk) pipe.push(all.subspan(off, std::min(chunk, all.size() - off)));
    return pipe.finish();
}

double calibrate_scale_k(std::span<const AccelTrace> traces, const PipelineConfig& cfg) {
    double peak = 0.0;
    for (const auto& tr : traces) {
        PipelineConfig probe = cfg;
        probe.scale_k = 1.0;
        const auto out = process_trace(tr, probe);
        for (double y : out.carrier) peak = std::max(peak, std::abs(y));
    }
    if (!(peak > 0.0)) throw ValidationError("cannot calibrate scale_k on silent traces");
    return 0.9 * cfg.duty_max / peak;
}

}  // namespace vibes
