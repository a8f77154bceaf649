#include "vibes/workflow.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "text.hpp"
#include "vibes/errors.hpp"
#include "vibes/parallel.hpp"
#include "vibes/rng.hpp"

namespace vibes {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& body) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << body;
    if (!out) throw IoError("write failed for " + path.string());
}

ojson interval_json(const std::optional<Interval>& iv) {
    if (!iv) return nullptr;
    return ojson::array({iv->first, iv->second});
}

std::string subject_log_name(int subject) {
    std::ostringstream os;
    os << "subject_" << std::setw(2) << std::setfill('0') << subject << ".jsonl";
    return os.str();
}

}  // namespace

PipelineConfig resolve_pipeline(const Config& cfg) {
    PipelineConfig p = cfg.pipeline;
    if (!cfg.auto_scale_k) return p;
    // Roughest texture = largest grit on the ladder.
    const auto roughest = *std::max_element(cfg.ladder.begin(), cfg.ladder.end(),
                                            [](const auto& a, const auto& b) { return a.grit_um < b.grit_um; });
    std::vector<AccelTrace> traces;
    for (int v = 1; v <= 2; ++v) {
        SynthParams sp = cfg.synth;
        sp.seed = variant_seed(cfg.synth.seed, roughest.fepa_grade, v);
        traces.push_back(synth_texture(roughest, sp));
    }
    p.scale_k = calibrate_scale_k(traces, p);
    return p;
}

Prepared prepare(const Config& cfg) {
    cfg.validate();
    Prepared prep;
    prep.config = cfg;
    prep.config.pipeline = resolve_pipeline(cfg);
    prep.config.plan.levels = cfg.ladder;
    prep.bank = synth_bank(cfg.ladder, cfg.synth);
    prep.renderer.emplace(prep.bank, prep.config.pipeline, cfg.actuator);
    prep.observer = cfg.observer.model;
    if (cfg.observer.calibrate) {
        prep.mean_percepts = measure_percepts(*prep.renderer, prep.observer, cfg.observer.calibration_reps,
                                              derive_seed(cfg.seed, "calibration"));
        const auto lapse = prep.observer.lapse_rate;
        prep.observer = calibrate_observer(cfg.ladder, prep.mean_percepts, reference_sandpaper(),
                                           cfg.observer.target_beta0(), cfg.observer.target_beta1());
        prep.observer.lapse_rate = lapse;
    }
    prep.observer.validate_for_experiment();
    return prep;
}

ObserverModel subject_observer(const Prepared& prep, int subject, std::uint64_t root_seed) {
    ObserverModel obs = prep.observer;
    if (prep.config.observer.subject_bias_sd > 0.0) {
        Rng rng(derive_seed(root_seed, "subject-bias", static_cast<std::uint64_t>(subject)));
        std::normal_distribution<double> g(0.0, prep.config.observer.subject_bias_sd * obs.noise_sigma);
        obs.bias += g(rng);
    }
    return obs;
}

SubjectSession run_subject(const Prepared& prep, int subject, std::uint64_t root_seed, const TrialSink& sink) {
    const auto sid = static_cast<std::uint64_t>(subject);
    const auto plan = build_plan(derive_seed(root_seed, "plan", sid), prep.config.plan);
    SimulatedResponder responder(subject_observer(prep, subject, root_seed), derive_seed(root_seed, "observer", sid));
    SubjectSession s;
    s.subject = subject;
    s.records = run_experiment(plan, *prep.renderer, responder, derive_seed(root_seed, "render", sid), sink);
    return s;
}

std::vector<SubjectSession> run_subjects(const Prepared& prep, int n, std::uint64_t root_seed, int jobs) {
    std::vector<SubjectSession> out(static_cast<std::size_t>(std::max(n, 0)));
    parallel_for(out.size(), jobs, [&](std::size_t i) { out[i] = run_subject(prep, static_cast<int>(i) + 1, root_seed); });
    return out;
}

FitDataset dataset_from_records(const std::vector<TrialRecord>& records, int subject) {
    FitDataset d;
    d.trials.reserve(records.size());
    for (const auto& r : records) d.trials.push_back({r.comparison.grit_um, r.response_cmp_rougher, subject});
    return d;
}

ojson fit_to_json(const PsychometricFit& fit) {
    ojson j;
    j["method"] = fit.method;
    j["beta0"] = fit.beta0;
    j["beta1"] = fit.beta1;
    j["jnd_um"] = std::isfinite(fit.jnd_um) ? ojson(fit.jnd_um) : ojson(nullptr);
    j["pse_um"] = std::isfinite(fit.pse_um) ? ojson(fit.pse_um) : ojson(nullptr);
    j["ci_jnd"] = interval_json(fit.ci_jnd);
    j["ci_pse"] = interval_json(fit.ci_pse);
    j["log_likelihood"] = fit.log_likelihood;
    j["converged"] = fit.converged;
    j["n_trials"] = fit.n_trials;
    j["iterations"] = fit.iterations;
    if (fit.sigma_subject) j["sigma_subject"] = *fit.sigma_subject;
    if (!fit.diagnostic.empty()) j["diagnostic"] = fit.diagnostic;
    return j;
}

ojson comparison_to_json(const RenderComparison& cmp) {
    return {{"rms_error", cmp.rms_error},
            {"spectral_coherence_mean", cmp.spectral_coherence_mean},
            {"envelope_correlation", cmp.envelope_correlation}};
}

ojson pairwise_to_json(const PairwiseTable& table) {
    ojson rows = ojson::array();
    for (const auto& r : table.rows)
        rows.push_back({{"comparison", r.comparison},
                        {"grade", r.level.fepa_grade},
                        {"grit_um", r.level.grit_um},
                        {"n_trials", r.n_trials},
                        {"count_cmp_rougher", r.count_cmp_rougher},
                        {"pct_success", 100.0 * r.pct_success}});
    return {{"rows", rows}, {"equal_pair_convention", table.equal_pair_convention}, {"warnings", table.warnings}};
}

ojson accuracy_to_json(const ConfusionMatrix& cm) {
    const auto acc = accuracy(cm);
    ojson labels = ojson::array();
    for (const auto& l : cm.labels) labels.push_back(l.fepa_grade);
    auto nan_to_null = [](const std::vector<double>& v) {
        ojson a = ojson::array();
        for (double x : v) a.push_back(std::isfinite(x) ? ojson(x) : ojson(nullptr));
        return a;
    };
    return {{"labels", labels},
            {"counts", cm.counts},
            {"overall_accuracy", acc.overall},
            {"per_true_class", nan_to_null(acc.per_true_class)},
            {"per_chosen_class", nan_to_null(acc.per_chosen_class)}};
}

ojson fit_report(const FitDataset& data, const FitReportOptions& opts) {
    PsychometricFit fit = opts.random_intercept ? fit_probit_random_intercept(data) : fit_probit(data);
    ojson j = fit_to_json(fit);
    j["interval"] = "percentile";
    j["resamples"] = opts.bootstrap;
    j["seed"] = opts.seed;
    if (opts.bootstrap > 0 && fit.converged && fit.beta1 > 0.0) {
        BootstrapOptions bo;
        bo.n_resamples = opts.bootstrap;
        bo.seed = opts.seed;
        bo.jobs = opts.jobs;
        bo.random_intercept = opts.random_intercept;
        const auto res = bootstrap(data, bo);
        fit.ci_jnd = res.ci_jnd;
        fit.ci_pse = res.ci_pse;
        j["ci_jnd"] = interval_json(fit.ci_jnd);
        j["ci_pse"] = interval_json(fit.ci_pse);
        j["failed_resamples"] = res.n_failed;
    }
    j["flat_curve"] = detect_flat_curve(fit, data, opts.flat);
    return j;
}

ojson cmd_synth(const Config& cfg, const fs::path& out_dir) {
    cfg.validate();
    fs::create_directories(out_dir);
    const auto bank = synth_bank(cfg.ladder, cfg.synth);
    ojson files = ojson::array();
    for (std::size_t i = 0; i < bank.ladder.size(); ++i) {
        for (std::size_t v = 0; v < bank.traces[i].size(); ++v) {
            const auto name = bank.ladder[i].fepa_grade + "_v" + std::to_string(v + 1) + ".csv";
            save_trace(bank.traces[i][v], out_dir / name);
            files.push_back(name);
        }
    }
    return {{"files", files}, {"rate_hz", cfg.synth.rate_hz}, {"seed", cfg.synth.seed}};
}

ojson cmd_render(const Config& cfg, const RenderArgs& args) {
    cfg.validate();
    const auto pipeline = resolve_pipeline(cfg);
    fs::create_directories(args.out_dir);

    const auto index = load_trace(args.index_trace);
    const auto index_out = process_trace(index, pipeline, args.stream_chunk);
    std::optional<ChannelOutput> thumb_out;
    if (args.thumb_trace) thumb_out = process_trace(load_trace(*args.thumb_trace), pipeline, args.stream_chunk);

    const auto routed = route_channels(index_out.pwm, thumb_out ? std::optional<PwmStream>(thumb_out->pwm) : std::nullopt);
    save_pwm(routed.left, args.out_dir / "pwm_left.csv");
    save_pwm(routed.right, args.out_dir / "pwm_right.csv");

    const auto left = render(index_out, cfg.actuator, derive_seed(args.seed, "render/left"));
    save_trace(left, args.out_dir / "rendered_left.csv");
    ojson j{{"scale_k", pipeline.scale_k},
            {"frames", routed.left.frames.size()},
            {"outputs", {"pwm_left.csv", "pwm_right.csv", "rendered_left.csv"}}};
    if (thumb_out) {
        save_trace(render(*thumb_out, cfg.actuator, derive_seed(args.seed, "render/right")), args.out_dir / "rendered_right.csv");
        j["outputs"].push_back("rendered_right.csv");
    }
    return j;
}

ojson cmd_characterize(const Config& cfg, const fs::path& trace_path, const std::optional<fs::path>& csv_out,
                       std::uint64_t seed) {
    cfg.validate();
    const auto pipeline = resolve_pipeline(cfg);
    const auto trace = load_trace(trace_path);
    const auto channel = process_trace(trace, pipeline);
    const auto rendered = render(channel, cfg.actuator, derive_seed(seed, "characterize"));
    std::vector<double> r(rendered.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rendered.samples[i].ax;
    const auto cmp = compare_render(channel.carrier, r, channel.rate_hz);
    if (csv_out) {
        std::ostringstream os;
        os << "t,s,r\n";
        for (std::size_t i = 0; i < r.size(); ++i)
            os << text::num(static_cast<double>(i) / channel.rate_hz) << ',' << text::num(channel.carrier[i]) << ','
               << text::num(r[i]) << '\n';
        write_text(*csv_out, os.str());
    }
    return comparison_to_json(cmp);
}

ojson cmd_experiment(const Config& cfg, const ExperimentArgs& args) {
    Config c = cfg;
    if (args.observer_sigma) {
        c.observer.calibrate = false;
        c.observer.model.noise_sigma = *args.observer_sigma;
    }
    const auto prep = prepare(c);
    const auto sid = static_cast<std::uint64_t>(args.subject);
    const auto plan = build_plan(derive_seed(args.seed, "plan", sid), prep.config.plan);

    ojson header{{"seed", args.seed}, {"subject", args.subject}};
    if (args.scripted) header["responses"] = "scripted";
    else header["observer"] = {{"noise_sigma", prep.observer.noise_sigma}, {"bias", prep.observer.bias}, {"lapse_rate", prep.observer.lapse_rate}};

    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    TrialLogWriter writer(args.out, header.dump());
    const TrialSink sink = [&](const TrialRecord& r) { writer.append(r); };

    std::vector<TrialRecord> records;
    if (args.scripted) {
        ScriptedResponder responder(load_scripted_responses(*args.scripted));
        records = run_experiment(plan, *prep.renderer, responder, derive_seed(args.seed, "render", sid), sink);
    } else {
        SimulatedResponder responder(subject_observer(prep, args.subject, args.seed), derive_seed(args.seed, "observer", sid));
        records = run_experiment(plan, *prep.renderer, responder, derive_seed(args.seed, "render", sid), sink);
    }
    long yes = 0;
    for (const auto& r : records) yes += r.response_cmp_rougher;
    return {{"trials", records.size()}, {"responses_cmp_rougher", yes}, {"log", args.out.filename().string()}};
}

void write_identification_log(const fs::path& path, const std::vector<IdentificationTrial>& trials) {
    std::ostringstream os;
    os << ojson{{"schema", "vibes.identification-log"}, {"version", 1}}.dump() << '\n';
    for (std::size_t i = 0; i < trials.size(); ++i)
        os << ojson{{"trial", i + 1},
                    {"presented", trials[i].presented.fepa_grade},
                    {"chosen", trials[i].chosen.fepa_grade},
                    {"feedback_on", trials[i].feedback_on}}
                  .dump()
           << '\n';
    write_text(path, os.str());
}

std::vector<IdentificationTrial> read_identification_log(const fs::path& path, const std::vector<SandpaperSpec>& ladder) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    std::vector<IdentificationTrial> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            const auto j = ojson::parse(line);
            if (lineno == 1) {
                if (j.value("schema", "") != "vibes.identification-log") throw ParseError("not an identification log", 1);
                continue;
            }
            out.push_back({find_grade(ladder, j.at("presented").get<std::string>()),
                           find_grade(ladder, j.at("chosen").get<std::string>()), j.at("feedback_on").get<bool>()});
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("bad identification record: ") + e.what(), lineno);
        }
    }
    return out;
}

ojson cmd_identify(const Config& cfg, const IdentifyArgs& args) {
    const auto prep = prepare(cfg);
    IdentificationOptions opts = cfg.identification;
    opts.feedback_on = args.feedback_on;
    opts.n_reps = args.reps;
    const auto trials = run_identification(opts, prep.observer, *prep.renderer, args.seed);
    if (args.out) write_identification_log(*args.out, trials);
    const auto cm = confusion_from_trials(trials, cfg.ladder);
    ojson j = accuracy_to_json(cm);
    j["feedback_on"] = args.feedback_on;
    j["trials"] = trials.size();
    return j;
}

ojson cmd_fit(const std::vector<fs::path>& logs, const FitReportOptions& opts) {
    if (logs.empty()) throw ValidationError("fit needs at least one trial log");
    FitDataset data;
    for (std::size_t i = 0; i < logs.size(); ++i) {
        const auto log = read_trial_log(logs[i]);
        const auto d = dataset_from_records(log.records, static_cast<int>(i) + 1);
        data.trials.insert(data.trials.end(), d.trials.begin(), d.trials.end());
    }
    if (data.size() < 10) throw ValidationError("fit needs at least 10 trials");
    return fit_report(data, opts);
}

ojson cmd_report_pairwise(const std::vector<fs::path>& logs) {
    std::vector<TrialRecord> all;
    for (const auto& p : logs) {
        const auto log = read_trial_log(p);
        all.insert(all.end(), log.records.begin(), log.records.end());
    }
    return pairwise_to_json(pairwise_success_table(all));
}

ojson cmd_report_confusion(const fs::path& identification_log, const Config& cfg, const std::optional<fs::path>& csv_out) {
    const auto trials = read_identification_log(identification_log, cfg.ladder);
    const auto cm = confusion_from_trials(trials, cfg.ladder);
    if (csv_out) write_text(*csv_out, confusion_to_csv(cm));
    return accuracy_to_json(cm);
}

ojson cmd_sus(const std::string& items) {
    const auto resp = parse_sus(items);
    return {{"items", resp.items}, {"sus_score", sus_score(resp)}};
}

std::string cmd_pipeline_demo(const Config& cfg, const DemoArgs& args) {
    if (args.subjects < 1) throw ParameterError("demo needs at least one subject");
    const auto prep = prepare(cfg);
    const auto root = prep.config.seed;
    fs::create_directories(args.out_dir / "traces");
    fs::create_directories(args.out_dir / "logs");

    for (std::size_t i = 0; i < prep.bank.ladder.size(); ++i)
        for (std::size_t v = 0; v < prep.bank.traces[i].size(); ++v)
            save_trace(prep.bank.traces[i][v],
                       args.out_dir / "traces" / (prep.bank.ladder[i].fepa_grade + "_v" + std::to_string(v + 1) + ".csv"));

    // Physical characterization on the reference texture.
    const auto& ref_trace = prep.bank.get(reference_sandpaper().fepa_grade, 1);
    const auto channel = process_trace(ref_trace, prep.config.pipeline);
    const auto rendered = render(channel, prep.config.actuator, derive_seed(root, "characterize"));
    std::vector<double> r(rendered.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rendered.samples[i].ax;
    const auto characterization = compare_render(channel.carrier, r, channel.rate_hz);

    const auto sessions = run_subjects(prep, args.subjects, root, args.jobs);
    ojson subjects = ojson::array();
    ojson excluded = ojson::array();
    FitDataset pooled, everyone;
    std::vector<TrialRecord> all_records;
    for (const auto& s : sessions) {
        write_trial_log(args.out_dir / "logs" / subject_log_name(s.subject), s.records,
                        ojson{{"seed", root}, {"subject", s.subject}}.dump());
        const auto data = dataset_from_records(s.records, s.subject);
        everyone.trials.insert(everyone.trials.end(), data.trials.begin(), data.trials.end());
        all_records.insert(all_records.end(), s.records.begin(), s.records.end());
        ojson entry{{"subject", s.subject}};
        bool flat = true;
        try {
            const auto fit = fit_probit(data);
            flat = detect_flat_curve(fit, data, prep.config.flat_curve);
            entry["fit"] = fit_to_json(fit);
        } catch (const ConvergenceError& e) {
            entry["fit"] = nullptr;
            entry["diagnostic"] = e.what();
        }
        entry["flat_curve"] = flat;
        subjects.push_back(entry);
        if (flat) excluded.push_back(s.subject);
        else pooled.trials.insert(pooled.trials.end(), data.trials.begin(), data.trials.end());
    }
    if (pooled.size() == 0) throw ConvergenceError("every subject was excluded as a flat curve");

    FitReportOptions fro;
    fro.bootstrap = args.bootstrap;
    fro.seed = derive_seed(root, "bootstrap");
    fro.jobs = args.jobs;
    fro.flat = prep.config.flat_curve;

    ojson report;
    report["tool"] = "vibes";
    report["version"] = kToolVersion;
    report["seed"] = root;
    report["config"] = config_to_json(prep.config);
    report["observer"] = {{"noise_sigma", prep.observer.noise_sigma},
                          {"bias", prep.observer.bias},
                          {"lapse_rate", prep.observer.lapse_rate},
                          {"mean_percepts", prep.mean_percepts}};
    report["characterization"] = comparison_to_json(characterization);
    report["subjects"] = subjects;
    report["excluded_flat_subjects"] = excluded;
    report["pooled_fit"] = fit_report(pooled, fro);
    if (pooled.subjects().size() >= 2) report["glmm_fit"] = fit_to_json(fit_probit_random_intercept(pooled));
    report["pairwise"] = pairwise_to_json(pairwise_success_table(all_records, prep.config.ladder));
    const std::string text = report.dump(2) + "\n";
    write_text(args.out_dir / "report.json", text);
    return text;
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

void write_manifest(const fs::path& path, const RunManifest& m) {
    ojson j{{"tool", "vibes"},
            {"version", kToolVersion},
            {"command", m.command},
            {"config", m.config},
            {"seeds", m.seeds},
            {"inputs", m.inputs},
            {"outputs", m.outputs},
            {"started_utc", m.started_utc},
            {"finished_utc", m.finished_utc}};
    write_text(path, j.dump(2) + "\n");
}

}  // namespace vibes
