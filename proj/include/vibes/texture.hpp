#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace vibes {

/// One abrasive stimulus: FEPA P-grade label and its average grit size in µm.
struct SandpaperSpec {
    std::string fepa_grade;
    double grit_um = 0.0;

    bool operator==(const SandpaperSpec&) const = default;
};

/// Canonical five-level ladder in descending roughness: P60, P80, P120, P220, P1000.
const std::vector<SandpaperSpec>& default_ladder();

/// Reference stimulus of the constant-stimuli protocol (P120, 127 µm).
const SandpaperSpec& reference_sandpaper();

/// Looks up a grade in `ladder`; throws ValidationError when absent.
const SandpaperSpec& find_grade(const std::vector<SandpaperSpec>& ladder, const std::string& grade);

void validate_ladder(const std::vector<SandpaperSpec>& ladder);

struct AccelSample {
    double t = 0.0;
    double ax = 0.0;
    double ay = 0.0;
    double az = 0.0;
};

/// Uniformly sampled 3-axis acceleration in m/s².
struct AccelTrace {
    std::vector<AccelSample> samples;
    double rate_hz = 0.0;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    double duration_s() const noexcept { return rate_hz > 0 ? static_cast<double>(samples.size()) / rate_hz : 0.0; }

    /// Checks finiteness, strictly increasing timestamps, uniform spacing and rate >= 1 kHz.
    void validate() const;
};

/// Builds a trace from a scalar series (single axis on x) starting at t = 0.
AccelTrace trace_from_scalar(std::span<const double> x, double rate_hz);

/// |a| per sample.
std::vector<double> magnitude(const AccelTrace& trace);

struct SynthParams {
    double rate_hz = 2000.0;
    double scan_speed_mps = 0.05;  // recorded for provenance only; not a perceptual variable
    double gain_k = 0.02;          // m/s² per µm^gamma
    double exponent_gamma = 1.0;
    double band_lo_hz = 60.0;
    double band_hi_hz = 400.0;
    double duration_s = 1.0;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Band-limited Gaussian texture surrogate whose RMS(|a|) is gain_k * grit^gamma.
AccelTrace synth_texture(const SandpaperSpec& spec, const SynthParams& params);

/// Target RMS(|a|) for a grit under the power law.
double texture_rms_target(const SandpaperSpec& spec, const SynthParams& params);

/// Reads the `t,ax,ay,az` CSV format.
AccelTrace load_trace(const std::filesystem::path& path);
void save_trace(const AccelTrace& trace, const std::filesystem::path& path);

/// Two stored recordings per sandpaper, indexed by variant 1 or 2.
struct TextureBank {
    std::vector<SandpaperSpec> ladder;
    // traces[i][v] is ladder[i], variant v+1
    std::vector<std::vector<AccelTrace>> traces;

    const AccelTrace& get(const std::string& grade, int variant) const;
    /// Throws ValidationError naming the first missing variant.
    void require_complete(int variants = 2) const;
};

/// Synthesizes every ladder grit in two variants with seeds derived from params.seed.
TextureBank synth_bank(const std::vector<SandpaperSpec>& ladder, const SynthParams& params);

/// Seed used for (grade, variant) by synth_bank.
std::uint64_t variant_seed(std::uint64_t root, const std::string& grade, int variant);

}  // namespace vibes
