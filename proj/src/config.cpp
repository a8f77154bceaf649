#include "vibes/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "vibes/errors.hpp"

namespace vibes {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

void Config::validate() const {
    validate_ladder(ladder);
    find_grade(ladder, reference_sandpaper().fepa_grade);
    synth.validate();
    pipeline.validate(synth.rate_hz);
    actuator.validate();
    if (!observer.calibrate) observer.model.validate_for_experiment();
    if (observer.calibrate && !(observer.target_jnd_um > 0.0)) throw ValidationError("observer target_jnd_um must be positive");
    if (observer.calibration_reps < 1) throw ValidationError("observer calibration_reps must be >= 1");
    if (!(observer.subject_bias_sd >= 0.0)) throw ValidationError("observer subject_bias_sd must be >= 0");
    if (!(identification.degradation > 1.0)) throw ValidationError("identification degradation must exceed 1");
    if (identification.n_reps < 1) throw ValidationError("identification n_reps must be >= 1");
    if (bootstrap_resamples < 0) throw ValidationError("bootstrap_resamples must be >= 0");
}

Config config_from_json(const json& j) {
    Config c;
    try {
        reject_unknown(j, {"seed", "ladder", "synth", "pipeline", "auto_scale_k", "actuator", "observer", "plan",
                           "identification", "bootstrap_resamples", "flat_curve"},
                       "config");
        read(j, "seed", c.seed);
        if (j.contains("ladder")) {
            c.ladder.clear();
            for (const auto& e : j.at("ladder")) {
                reject_unknown(e, {"grade", "grit_um"}, "ladder entry");
                c.ladder.push_back({e.at("grade").get<std::string>(), e.at("grit_um").get<double>()});
            }
        }
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            reject_unknown(s, {"rate_hz", "scan_speed_mps", "gain_k", "exponent_gamma", "band_lo_hz", "band_hi_hz",
                               "duration_s", "seed"},
                           "synth");
            read(s, "rate_hz", c.synth.rate_hz);
            read(s, "scan_speed_mps", c.synth.scan_speed_mps);
            read(s, "gain_k", c.synth.gain_k);
            read(s, "exponent_gamma", c.synth.exponent_gamma);
            read(s, "band_lo_hz", c.synth.band_lo_hz);
            read(s, "band_hi_hz", c.synth.band_hi_hz);
            read(s, "duration_s", c.synth.duration_s);
            read(s, "seed", c.synth.seed);
        }
        if (j.contains("pipeline")) {
            const auto& p = j.at("pipeline");
            reject_unknown(p, {"hp_cutoff_hz", "lp_cutoff_hz", "filter_order", "reduction", "dft321_block",
                               "limiter_ceiling", "scale_k", "duty_max", "frame_rate_hz"},
                           "pipeline");
            read(p, "hp_cutoff_hz", c.pipeline.hp_cutoff_hz);
            read(p, "lp_cutoff_hz", c.pipeline.lp_cutoff_hz);
            read(p, "filter_order", c.pipeline.filter_order);
            if (p.contains("reduction")) c.pipeline.reduction = reduction_from_string(p.at("reduction").get<std::string>());
            read(p, "dft321_block", c.pipeline.dft321_block);
            read(p, "limiter_ceiling", c.pipeline.limiter_ceiling);
            if (p.contains("scale_k")) {
                c.pipeline.scale_k = p.at("scale_k").get<double>();
                c.auto_scale_k = false;
            }
            read(p, "duty_max", c.pipeline.duty_max);
            read(p, "frame_rate_hz", c.pipeline.frame_rate_hz);
        }
        read(j, "auto_scale_k", c.auto_scale_k);
        if (j.contains("actuator")) {
            const auto& a = j.at("actuator");
            reject_unknown(a, {"band_lo_hz", "band_hi_hz", "gain", "order", "noise_floor_rms"}, "actuator");
            read(a, "band_lo_hz", c.actuator.band_lo_hz);
            read(a, "band_hi_hz", c.actuator.band_hi_hz);
            read(a, "gain", c.actuator.gain);
            read(a, "order", c.actuator.order);
            read(a, "noise_floor_rms", c.actuator.noise_floor_rms);
        }
        if (j.contains("observer")) {
            const auto& o = j.at("observer");
            reject_unknown(o, {"percept_map", "noise_sigma", "bias", "lapse_rate", "calibrate", "target_jnd_um",
                               "target_pse_um", "calibration_reps", "subject_bias_sd"},
                           "observer");
            if (o.contains("percept_map") && o.at("percept_map").get<std::string>() != "rms")
                throw ValidationError("observer percept_map must be 'rms'");
            read(o, "noise_sigma", c.observer.model.noise_sigma);
            read(o, "bias", c.observer.model.bias);
            read(o, "lapse_rate", c.observer.model.lapse_rate);
            read(o, "calibrate", c.observer.calibrate);
            read(o, "target_jnd_um", c.observer.target_jnd_um);
            read(o, "target_pse_um", c.observer.target_pse_um);
            read(o, "calibration_reps", c.observer.calibration_reps);
            read(o, "subject_bias_sd", c.observer.subject_bias_sd);
        }
        if (j.contains("plan")) {
            const auto& p = j.at("plan");
            reject_unknown(p, {"trials_per_level", "max_consecutive", "randomize_order"}, "plan");
            read(p, "trials_per_level", c.plan.trials_per_level);
            read(p, "max_consecutive", c.plan.max_consecutive);
            read(p, "randomize_order", c.plan.randomize_order);
        }
        if (j.contains("identification")) {
            const auto& i = j.at("identification");
            reject_unknown(i, {"n_reps", "degradation"}, "identification");
            read(i, "n_reps", c.identification.n_reps);
            read(i, "degradation", c.identification.degradation);
        }
        read(j, "bootstrap_resamples", c.bootstrap_resamples);
        if (j.contains("flat_curve")) {
            const auto& f = j.at("flat_curve");
            reject_unknown(f, {"alpha", "stimulus_range_um"}, "flat_curve");
            read(f, "alpha", c.flat_curve.alpha);
            read(f, "stimulus_range_um", c.flat_curve.stimulus_range_um);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("invalid config: ") + e.what());
    }
    c.plan.levels = c.ladder;
    c.validate();
    return c;
}

ojson config_to_json(const Config& c) {
    ojson j;
    j["seed"] = c.seed;
    j["ladder"] = ojson::array();
    for (const auto& s : c.ladder) j["ladder"].push_back({{"grade", s.fepa_grade}, {"grit_um", s.grit_um}});
    j["synth"] = {{"rate_hz", c.synth.rate_hz},         {"scan_speed_mps", c.synth.scan_speed_mps},
                  {"gain_k", c.synth.gain_k},           {"exponent_gamma", c.synth.exponent_gamma},
                  {"band_lo_hz", c.synth.band_lo_hz},   {"band_hi_hz", c.synth.band_hi_hz},
                  {"duration_s", c.synth.duration_s},   {"seed", c.synth.seed}};
    j["pipeline"] = {{"hp_cutoff_hz", c.pipeline.hp_cutoff_hz},
                     {"lp_cutoff_hz", c.pipeline.lp_cutoff_hz},
                     {"filter_order", c.pipeline.filter_order},
                     {"reduction", to_string(c.pipeline.reduction)},
                     {"dft321_block", c.pipeline.dft321_block},
                     {"limiter_ceiling", c.pipeline.limiter_ceiling},
                     {"scale_k", c.pipeline.scale_k},
                     {"duty_max", c.pipeline.duty_max},
                     {"frame_rate_hz", c.pipeline.frame_rate_hz}};
    j["auto_scale_k"] = c.auto_scale_k;
    j["actuator"] = {{"band_lo_hz", c.actuator.band_lo_hz},
                     {"band_hi_hz", c.actuator.band_hi_hz},
                     {"gain", c.actuator.gain},
                     {"order", c.actuator.order},
                     {"noise_floor_rms", c.actuator.noise_floor_rms}};
    j["observer"] = {{"percept_map", "rms"},
                     {"noise_sigma", c.observer.model.noise_sigma},
                     {"bias", c.observer.model.bias},
                     {"lapse_rate", c.observer.model.lapse_rate},
                     {"calibrate", c.observer.calibrate},
                     {"target_jnd_um", c.observer.target_jnd_um},
                     {"target_pse_um", c.observer.target_pse_um},
                     {"calibration_reps", c.observer.calibration_reps},
                     {"subject_bias_sd", c.observer.subject_bias_sd}};
    j["plan"] = {{"trials_per_level", c.plan.trials_per_level},
                 {"max_consecutive", c.plan.max_consecutive},
                 {"randomize_order", c.plan.randomize_order}};
    j["identification"] = {{"n_reps", c.identification.n_reps}, {"degradation", c.identification.degradation}};
    j["bootstrap_resamples"] = c.bootstrap_resamples;
    j["flat_curve"] = {{"alpha", c.flat_curve.alpha}, {"stimulus_range_um", c.flat_curve.stimulus_range_um}};
    return j;
}

Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

Config resolve_config(const std::optional<std::filesystem::path>& path) {
    if (path) return load_config(*path);
    if (const char* env = std::getenv(kConfigEnvVar); env && *env) return load_config(env);
    Config c;
    c.validate();
    return c;
}

}  // namespace vibes
