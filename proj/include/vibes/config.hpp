#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibes/actuator.hpp"
#include "vibes/dsp.hpp"
#include "vibes/psychophysics.hpp"
#include "vibes/statfit.hpp"
#include "vibes/texture.hpp"

namespace vibes {

/// Environment variable naming the default configuration file.
inline constexpr const char* kConfigEnvVar = "VIBES_CONFIG";

struct ObserverConfig {
    ObserverModel model;
    /// When set, noise_sigma and bias are derived from the target JND/PSE at run time.
    bool calibrate = true;
    double target_jnd_um = 87.30;
    double target_pse_um = 151.96;
    int calibration_reps = 4;
    /// SD of a per-subject bias offset, in units of noise_sigma (0 = identical subjects).
    double subject_bias_sd = 0.0;

    double target_beta0() const { return -target_pse_um / target_jnd_um; }
    double target_beta1() const { return 1.0 / target_jnd_um; }
};

struct Config {
    std::uint64_t seed = 1;
    std::vector<SandpaperSpec> ladder = default_ladder();
    SynthParams synth;
    PipelineConfig pipeline;
    /// Derive pipeline.scale_k so the roughest texture peaks at 0.9 * duty_max.
    bool auto_scale_k = true;
    ActuatorModel actuator;
    ObserverConfig observer;
    PlanOptions plan;
    IdentificationOptions identification;
    int bootstrap_resamples = 2000;
    FlatCurveOptions flat_curve;

    void validate() const;
};

/// Unknown keys are rejected so that typos do not silently fall back to defaults.
Config config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const Config& cfg);
Config load_config(const std::filesystem::path& path);

/// Explicit path, else $VIBES_CONFIG, else built-in defaults.
Config resolve_config(const std::optional<std::filesystem::path>& path);

}  // namespace vibes
