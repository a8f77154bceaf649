#include "vibes/texture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>

#include "text.hpp"
#include "vibes/errors.hpp"
#include "vibes/rng.hpp"
#include "vibes/spectral.hpp"

namespace vibes {

const std::vector<SandpaperSpec>& default_ladder() {
    static const std::vector<SandpaperSpec> ladder{
        {"P60", 264.0}, {"P80", 195.0}, {"P120", 127.0}, {"P220", 65.0}, {"P1000", 18.0}};
    return ladder;
}

const SandpaperSpec& reference_sandpaper() {
    static const SandpaperSpec ref{"P120", 127.0};
    return ref;
}

const SandpaperSpec& find_grade(const std::vector<SandpaperSpec>& ladder, const std::string& grade) {
    auto it = std::find_if(ladder.begin(), ladder.end(), [&](const auto& s) { return s.fepa_grade == grade; });
    if (it == ladder.end()) throw ValidationError("grade " + grade + " is not in the sandpaper ladder");
    return *it;
}

void validate_ladder(const std::vector<SandpaperSpec>& ladder) {
    if (ladder.empty()) throw ValidationError("empty sandpaper ladder");
    for (const auto& s : ladder) {
        if (!(s.grit_um > 0.0) || !std::isfinite(s.grit_um))
            throw ValidationError("grit size of " + s.fepa_grade + " must be positive");
        if (std::count_if(ladder.begin(), ladder.end(), [&](const auto& o) { return o.fepa_grade == s.fepa_grade; }) != 1)
            throw ValidationError("duplicate grade " + s.fepa_grade);
    }
}

void AccelTrace::validate() const {
    if (!(rate_hz >= 1000.0)) throw ValidationError("sampling rate must be >= 1000 Hz");
    const double dt = 1.0 / rate_hz;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        if (!std::isfinite(s.t) || !std::isfinite(s.ax) || !std::isfinite(s.ay) || !std::isfinite(s.az))
            throw ValidationError("non-finite value at sample " + std::to_string(i));
        if (i > 0) {
            if (!(s.t > samples[i - 1].t))
                throw ValidationError("timestamps not strictly increasing at sample " + std::to_string(i));
            if (std::abs(s.t - samples[0].t - static_cast<double>(i) * dt) > 1e-9)
                throw ValidationError("non-uniform sampling at sample " + std::to_string(i));
        }
    }
}

AccelTrace trace_from_scalar(std::span<const double> x, double rate_hz) {
    AccelTrace tr;
    tr.rate_hz = rate_hz;
    tr.samples.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) tr.samples[i] = {static_cast<double>(i) / rate_hz, x[i], 0.0, 0.0};
    return tr;
}

std::vector<double> magnitude(const AccelTrace& trace) {
    std::vector<double> out(trace.size());
    std::transform(trace.samples.begin(), trace.samples.end(), out.begin(),
                   [](const AccelSample& s) { return std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az); });
    return out;
}

void SynthParams::validate() const {
    if (!(rate_hz >= 1000.0)) throw ParameterError("synth rate_hz must be >= 1000");
    if (!(band_lo_hz > 0.0 && band_lo_hz < band_hi_hz && band_hi_hz < rate_hz / 2.0))
        throw ParameterError("synth band must satisfy 0 < lo < hi < rate/2");
    if (!(duration_s > 0.0)) throw ParameterError("synth duration must be positive");
    if (!(gain_k >= 0.0) || !std::isfinite(exponent_gamma)) throw ParameterError("synth gain/exponent invalid");
}

double texture_rms_target(const SandpaperSpec& spec, const SynthParams& params) {
    return params.gain_k * std::pow(spec.grit_um, params.exponent_gamma);
}

AccelTrace synth_texture(const SandpaperSpec& spec, const SynthParams& params) {
    params.validate();
    if (!(spec.grit_um > 0.0)) throw ParameterError("grit size must be positive");

    const auto n = static_cast<std::size_t>(std::llround(params.duration_s * params.rate_hz));
    if (n < 2) throw ParameterError("synth duration shorter than two samples");

    Rng rng(params.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::array<std::vector<double>, 3> axes;
    for (auto& axis : axes) {
        std::vector<double> white(n);
        for (auto& v : white) v = gauss(rng);
        auto spec_bins = rfft(white);
        for (std::size_t k = 0; k < spec_bins.size(); ++k) {
            const double f = static_cast<double>(k) * params.rate_hz / static_cast<double>(n);
            if (f < params.band_lo_hz || f > params.band_hi_hz) spec_bins[k] = 0.0;
        }
        axis = irfft(spec_bins, n);
    }

    double power = 0.0;
    for (std::size_t i = 0; i < n; ++i) power += axes[0][i] * axes[0][i] + axes[1][i] * axes[1][i] + axes[2][i] * axes[2][i];
    const double rms = std::sqrt(power / static_cast<double>(n));
    const double target = texture_rms_target(spec, params);
    const double scale = rms > 0.0 ? target / rms : 0.0;

    AccelTrace tr;
    tr.rate_hz = params.rate_hz;
    tr.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        tr.samples[i] = {static_cast<double>(i) / params.rate_hz, scale * axes[0][i], scale * axes[1][i], scale * axes[2][i]};
    return tr;
}

AccelTrace load_trace(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trace file " + path.string());
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty trace file", 1);
    ++lineno;
    if (text::trim(line) != "t,ax,ay,az") throw ParseError("expected header 't,ax,ay,az'", lineno);

    AccelTrace tr;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        auto fields = text::split(line, ',');
        if (fields.size() != 4) throw ParseError("expected 4 columns", lineno);
        AccelSample s{text::parse_double(fields[0], lineno), text::parse_double(fields[1], lineno),
                      text::parse_double(fields[2], lineno), text::parse_double(fields[3], lineno)};
        if (!tr.samples.empty() && !(s.t > tr.samples.back().t))
            throw ParseError("timestamp not strictly increasing", lineno);
        tr.samples.push_back(s);
    }
    if (tr.samples.size() < 2) throw ParseError("trace needs at least two samples", lineno);

    const double span = tr.samples.back().t - tr.samples.front().t;
    double rate = static_cast<double>(tr.samples.size() - 1) / span;
    if (std::abs(rate - std::round(rate)) < 1e-6 * rate) rate = std::round(rate);
    tr.rate_hz = rate;

    const double dt = 1.0 / rate;
    for (std::size_t i = 1; i < tr.samples.size(); ++i) {
        if (std::abs(tr.samples[i].t - tr.samples[0].t - static_cast<double>(i) * dt) > 1e-9)
            throw ParseError("non-uniform sampling", i + 2);
    }
    tr.validate();
    return tr;
}

void save_trace(const AccelTrace& trace, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write trace file " + path.string());
    out << "t,ax,ay,az\n";
    for (const auto& s : trace.samples)
        out << text::num(s.t) << ',' << text::num(s.ax) << ',' << text::num(s.ay) << ',' << text::num(s.az) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

const AccelTrace& TextureBank::get(const std::string& grade, int variant) const {
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        if (ladder[i].fepa_grade != grade) continue;
        if (variant < 1 || static_cast<std::size_t>(variant) > traces[i].size() || traces[i][variant - 1].empty())
            throw ValidationError("texture bank has no variant " + std::to_string(variant) + " for " + grade);
        return traces[i][variant - 1];
    }
    throw ValidationError("texture bank has no entry for " + grade);
}

void TextureBank::require_complete(int variants) const {
    if (traces.size() != ladder.size()) throw ValidationError("texture bank ladder/trace count mismatch");
    for (std::size_t i = 0; i < ladder.size(); ++i)
        for (int v = 1; v <= variants; ++v) get(ladder[i].fepa_grade, v);
}

std::uint64_t variant_seed(std::uint64_t root, const std::string& grade, int variant) {
    return derive_seed(root, "texture/" + grade, static_cast<std::uint64_t>(variant));
}

TextureBank synth_bank(const std::vector<SandpaperSpec>& ladder, const SynthParams& params) {
    validate_ladder(ladder);
    TextureBank bank;
    bank.ladder = ladder;
    for (const auto& spec : ladder) {
        std::vector<AccelTrace> variants;
        for (int v = 1; v <= 2; ++v) {
            SynthParams p = params;
            p.seed = variant_seed(params.seed, spec.fepa_grade, v);
            variants.push_back(synth_texture(spec, p));
        }
        bank.traces.push_back(std::move(variants));
    }
    return bank;
}

}  // namespace vibes
