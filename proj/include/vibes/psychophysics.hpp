#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vibes/actuator.hpp"
#include "vibes/dsp.hpp"
#include "vibes/rng.hpp"
#include "vibes/texture.hpp"

namespace vibes {

enum class PresentationOrder { ref_first, cmp_first };

std::string to_string(PresentationOrder o);
PresentationOrder order_from_string(const std::string& s);

struct PlannedTrial {
    SandpaperSpec comparison;
    int ref_variant = 1;
    int cmp_variant = 1;
    PresentationOrder order = PresentationOrder::ref_first;
};

struct PlanOptions {
    std::vector<SandpaperSpec> levels = default_ladder();
    int trials_per_level = 20;
    /// Longest allowed run of the same comparison level.
    int max_consecutive = 3;
    bool randomize_order = true;
};

struct ExperimentPlan {
    std::vector<PlannedTrial> trials;
    std::vector<SandpaperSpec> levels;
    int trials_per_level = 20;
    int max_consecutive = 3;
    std::uint64_t seed = 0;
};

/// Pseudo-random constant-stimuli plan: every level exactly trials_per_level times, no run longer
/// than max_consecutive, variants and presentation order drawn uniformly.
ExperimentPlan build_plan(std::uint64_t seed, const PlanOptions& opts = {});

/// Empty string when the plan satisfies its invariants, otherwise a description of the first violation.
std::string check_plan(const ExperimentPlan& plan);

struct TrialRecord {
    int trial_index = 0;  // 1-based
    SandpaperSpec reference;
    SandpaperSpec comparison;
    int ref_variant = 1;
    int cmp_variant = 1;
    PresentationOrder order = PresentationOrder::ref_first;
    bool response_cmp_rougher = false;

    bool operator==(const TrialRecord&) const = default;
};

enum class PerceptMap { rms };

/// Simulated participant. Percepts are compared with Gaussian noise; lapses respond at random.
struct ObserverModel {
    PerceptMap percept_map = PerceptMap::rms;
    double noise_sigma = 0.1;  // percept units
    double bias = 0.0;         // added to the reference percept
    double lapse_rate = 0.0;

    /// noise_sigma > 0 and lapse_rate in [0, 1].
    void validate() const;
    /// Stricter bound for configured experiment observers: lapse_rate <= 0.1.
    void validate_for_experiment() const;
};

double percept(const AccelTrace& rendered, const ObserverModel& observer);

/// P(response "comparison rougher") for noiseless percepts mu_ref and mu_cmp.
double response_probability(double mu_ref, double mu_cmp, const ObserverModel& observer);

bool respond_from_percepts(double mu_ref, double mu_cmp, const ObserverModel& observer, Rng& rng);

bool simulate_observer_response(const AccelTrace& ref_render, const AccelTrace& cmp_render,
                                const ObserverModel& observer, std::uint64_t seed);

/// Source of trial responses: a simulated observer or a scripted file.
class Responder {
public:
    virtual ~Responder() = default;
    virtual bool respond(int trial_index, const AccelTrace& ref_render, const AccelTrace& cmp_render) = 0;
};

class SimulatedResponder final : public Responder {
public:
    SimulatedResponder(ObserverModel observer, std::uint64_t seed) : observer_(observer), seed_(seed) {}
    bool respond(int trial_index, const AccelTrace& ref_render, const AccelTrace& cmp_render) override;

private:
    ObserverModel observer_;
    std::uint64_t seed_;
};

class ScriptedResponder final : public Responder {
public:
    explicit ScriptedResponder(std::vector<bool> responses) : responses_(std::move(responses)) {}
    bool respond(int trial_index, const AccelTrace& ref_render, const AccelTrace& cmp_render) override;

private:
    std::vector<bool> responses_;
};

/// Plain text, one 0 or 1 per line.
std::vector<bool> load_scripted_responses(const std::filesystem::path& path);

/// Runs bank textures through the pipeline and actuator. The deterministic part of each render is
/// cached; only actuator noise is drawn per call.
class StimulusRenderer {
public:
    StimulusRenderer(const TextureBank& bank, PipelineConfig pipeline, ActuatorModel actuator);

    AccelTrace render(const std::string& grade, int variant, std::uint64_t noise_seed) const;
    bool has(const std::string& grade, int variant) const;
    const TextureBank& bank() const noexcept { return bank_; }
    const PipelineConfig& pipeline() const noexcept { return pipeline_; }
    const ActuatorModel& actuator() const noexcept { return actuator_; }

private:
    TextureBank bank_;
    PipelineConfig pipeline_;
    ActuatorModel actuator_;
    std::map<std::pair<std::string, int>, AccelTrace> clean_;
};

/// Called after each trial; the JSONL writer flushes here.
using TrialSink = std::function<void(const TrialRecord&)>;

/// One session. Every trial renders both stimuli; render noise seeds derive from `seed`.
/// Throws ValidationError before any trial when the bank lacks a needed variant.
std::vector<TrialRecord> run_experiment(const ExperimentPlan& plan, const StimulusRenderer& renderer,
                                        Responder& responder, std::uint64_t seed, const TrialSink& sink = {});

/// Convenience overload building the renderer from its parts.
std::vector<TrialRecord> run_experiment(const ExperimentPlan& plan, const PipelineConfig& pipeline_cfg,
                                        const ActuatorModel& actuator, Responder& responder, const TextureBank& bank,
                                        std::uint64_t seed, const TrialSink& sink = {});

/// Mean percept per ladder level, averaged over both variants and `reps` noise draws.
std::vector<double> measure_percepts(const StimulusRenderer& renderer, const ObserverModel& observer, int reps,
                                     std::uint64_t seed);

/// Observer whose response probability follows Φ(beta0 + beta1·x) for the measured percept table:
/// percepts are fitted linearly in grit (slope a), noise_sigma = a / (sqrt(2)·beta1) and the bias
/// places P = 0.5 at x = -beta0/beta1 relative to the measured reference percept.
ObserverModel calibrate_observer(const std::vector<SandpaperSpec>& ladder, const std::vector<double>& mean_percepts,
                                 const SandpaperSpec& reference, double beta0, double beta1);

struct IdentificationTrial {
    SandpaperSpec presented;
    SandpaperSpec chosen;
    bool feedback_on = true;
};

struct IdentificationOptions {
    int n_reps = 5;
    bool feedback_on = true;
    /// noise_sigma multiplier without feedback; must exceed 1.
    double degradation = 2.0;
};

/// Active identification: each ladder grit presented n_reps times in random order; the observer picks
/// the ladder grit whose freshly re-measured noisy percept is nearest the presented one.
std::vector<IdentificationTrial> run_identification(const IdentificationOptions& opts, const ObserverModel& observer,
                                                    const StimulusRenderer& renderer, std::uint64_t seed);

// Trial log I/O: JSON lines, first line is a schema header.
inline constexpr const char* kTrialLogSchema = "vibes.trial-log";
inline constexpr int kTrialLogVersion = 1;

class TrialLogWriter {
public:
    TrialLogWriter(const std::filesystem::path& path, const std::string& header_json_extra = "{}");
    ~TrialLogWriter();
    TrialLogWriter(const TrialLogWriter&) = delete;
    TrialLogWriter& operator=(const TrialLogWriter&) = delete;

    void append(const TrialRecord& rec);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string trial_to_json(const TrialRecord& rec);
TrialRecord trial_from_json(const std::string& line, std::size_t lineno);

struct TrialLog {
    std::string header_json;
    std::vector<TrialRecord> records;
};

TrialLog read_trial_log(const std::filesystem::path& path);
void write_trial_log(const std::filesystem::path& path, const std::vector<TrialRecord>& records,
                     const std::string& header_json_extra = "{}");

}  // namespace vibes
