#pragma once

// End-to-end orchestration shared by the command-line tool and the acceptance suite.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vibes/config.hpp"
#include "vibes/evaluation.hpp"
#include "vibes/psychophysics.hpp"
#include "vibes/statfit.hpp"

namespace vibes {

inline constexpr const char* kToolVersion = "0.1.0";

/// Pipeline config with scale_k resolved (auto-calibrated on the roughest ladder texture when enabled).
PipelineConfig resolve_pipeline(const Config& cfg);

/// Everything a psychophysics session needs, derived deterministically from a config.
struct Prepared {
    Config config;  // pipeline.scale_k resolved
    TextureBank bank;
    std::optional<StimulusRenderer> renderer;
    ObserverModel observer;  // calibrated when config.observer.calibrate
    std::vector<double> mean_percepts;
};

Prepared prepare(const Config& cfg);

/// Observer of one virtual subject: the shared observer plus an optional per-subject bias offset.
ObserverModel subject_observer(const Prepared& prep, int subject, std::uint64_t root_seed);

struct SubjectSession {
    int subject = 0;
    std::vector<TrialRecord> records;
};

/// One constant-stimuli session; seeds derive from (root_seed, subject).
SubjectSession run_subject(const Prepared& prep, int subject, std::uint64_t root_seed, const TrialSink& sink = {});

/// Subjects 1..n, independent and deterministic regardless of `jobs`.
std::vector<SubjectSession> run_subjects(const Prepared& prep, int n, std::uint64_t root_seed, int jobs = 1);

FitDataset dataset_from_records(const std::vector<TrialRecord>& records, int subject = 0);

nlohmann::ordered_json fit_to_json(const PsychometricFit& fit);
nlohmann::ordered_json comparison_to_json(const RenderComparison& cmp);
nlohmann::ordered_json pairwise_to_json(const PairwiseTable& table);
nlohmann::ordered_json accuracy_to_json(const ConfusionMatrix& cm);

struct FitReportOptions {
    int bootstrap = 2000;
    std::uint64_t seed = 1;
    bool random_intercept = false;
    int jobs = 1;
    FlatCurveOptions flat;
};

/// Point fit, bootstrap CIs and flat-curve flag as a JSON report.
nlohmann::ordered_json fit_report(const FitDataset& data, const FitReportOptions& opts);

// Subcommand bodies. Each writes its outputs and returns a JSON summary.
nlohmann::ordered_json cmd_synth(const Config& cfg, const std::filesystem::path& out_dir);

struct RenderArgs {
    std::filesystem::path index_trace;
    std::optional<std::filesystem::path> thumb_trace;
    std::filesystem::path out_dir;
    std::size_t stream_chunk = 0;
    std::uint64_t seed = 1;
};
nlohmann::ordered_json cmd_render(const Config& cfg, const RenderArgs& args);

nlohmann::ordered_json cmd_characterize(const Config& cfg, const std::filesystem::path& trace,
                                        const std::optional<std::filesystem::path>& csv_out, std::uint64_t seed);

struct ExperimentArgs {
    std::uint64_t seed = 1;
    int subject = 1;
    std::optional<double> observer_sigma;
    std::optional<std::filesystem::path> scripted;
    std::filesystem::path out;
};
nlohmann::ordered_json cmd_experiment(const Config& cfg, const ExperimentArgs& args);

struct IdentifyArgs {
    bool feedback_on = true;
    int reps = 5;
    std::uint64_t seed = 1;
    std::optional<std::filesystem::path> out;
};
nlohmann::ordered_json cmd_identify(const Config& cfg, const IdentifyArgs& args);

void write_identification_log(const std::filesystem::path& path, const std::vector<IdentificationTrial>& trials);
std::vector<IdentificationTrial> read_identification_log(const std::filesystem::path& path,
                                                         const std::vector<SandpaperSpec>& ladder);

nlohmann::ordered_json cmd_fit(const std::vector<std::filesystem::path>& logs, const FitReportOptions& opts);
nlohmann::ordered_json cmd_report_pairwise(const std::vector<std::filesystem::path>& logs);
nlohmann::ordered_json cmd_report_confusion(const std::filesystem::path& identification_log, const Config& cfg,
                                            const std::optional<std::filesystem::path>& csv_out);
nlohmann::ordered_json cmd_sus(const std::string& items);

struct DemoArgs {
    std::filesystem::path out_dir;
    int subjects = 12;
    int bootstrap = 2000;
    int jobs = 1;
};
/// synth -> render -> characterize -> experiment -> fit. Writes report.json (no paths or
/// timestamps, so fixed seeds give byte-identical reports) and returns its text.
std::string cmd_pipeline_demo(const Config& cfg, const DemoArgs& args);

struct RunManifest {
    std::string command;
    nlohmann::ordered_json config;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::string started_utc;
    std::string finished_utc;
};

std::string utc_now();
void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace vibes
