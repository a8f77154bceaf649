#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vibes/errors.hpp"
#include "vibes/workflow.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, nonconvergence = 3 };

struct Overrides {
    std::optional<fs::path> config;
    std::optional<std::uint64_t> seed;
    std::optional<double> rate;
    std::optional<double> hp_cutoff;
    std::optional<double> lp_cutoff;
    std::optional<std::string> reduction;
    std::optional<double> limiter;
    std::optional<double> scale_k;
    std::optional<double> duty_max;
    std::optional<double> frame_rate;
    std::optional<double> noise_floor;
    std::optional<double> lapse;
};

void add_config_options(CLI::App& app, Overrides& o) {
    app.add_option("--config", o.config, "JSON config file (default: $VIBES_CONFIG, else built-in)");
    app.add_option("--rate", o.rate, "Texture sample rate in Hz");
    app.add_option("--hp-cutoff", o.hp_cutoff, "Band-pass high-pass corner in Hz");
    app.add_option("--lp-cutoff", o.lp_cutoff, "Band-pass low-pass corner in Hz");
    app.add_option("--reduction", o.reduction, "3-to-1 reduction: magnitude or dft321");
    app.add_option("--limiter", o.limiter, "Limiter ceiling in m/s^2");
    app.add_option("--scale-k", o.scale_k, "PWM duty per m/s^2 (disables auto scaling)");
    app.add_option("--duty-max", o.duty_max, "Largest PWM duty");
    app.add_option("--frame-rate", o.frame_rate, "PWM frame rate in Hz");
    app.add_option("--noise-floor", o.noise_floor, "Actuator noise floor RMS in m/s^2");
    app.add_option("--lapse", o.lapse, "Observer lapse rate");
}

vibes::Config build_config(const Overrides& o) {
    vibes::Config c = vibes::resolve_config(o.config);
    if (o.seed) c.seed = *o.seed;
    if (o.rate) c.synth.rate_hz = *o.rate;
    if (o.hp_cutoff) c.pipeline.hp_cutoff_hz = *o.hp_cutoff;
    if (o.lp_cutoff) c.pipeline.lp_cutoff_hz = *o.lp_cutoff;
    if (o.reduction) c.pipeline.reduction = vibes::reduction_from_string(*o.reduction);
    if (o.limiter) c.pipeline.limiter_ceiling = *o.limiter;
    if (o.scale_k) {
        c.pipeline.scale_k = *o.scale_k;
        c.auto_scale_k = false;
    }
    if (o.duty_max) c.pipeline.duty_max = *o.duty_max;
    if (o.frame_rate) c.pipeline.frame_rate_hz = *o.frame_rate;
    if (o.noise_floor) c.actuator.noise_floor_rms = *o.noise_floor;
    if (o.lapse) c.observer.model.lapse_rate = *o.lapse;
    try {
        c.validate();
    } catch (const vibes::ParameterError& e) {
        throw vibes::ValidationError(std::string("invalid config: ") + e.what());
    }
    return c;
}

std::vector<std::string> paths(const std::vector<fs::path>& ps) {
    std::vector<std::string> out;
    for (const auto& p : ps) out.push_back(p.string());
    return out;
}

// Writes the summary to `out` (with the manifest beside it) or to stdout with the manifest embedded.
void emit(const ojson& summary, vibes::RunManifest m, const std::optional<fs::path>& out) {
    m.finished_utc = vibes::utc_now();
    if (out) {
        if (out->has_parent_path()) fs::create_directories(out->parent_path());
        std::ofstream f(*out);
        if (!f) throw vibes::IoError("cannot write " + out->string());
        f << summary.dump(2) << '\n';
        m.outputs.push_back(out->string());
        vibes::write_manifest(fs::path(out->string() + ".manifest.json"), m);
        std::cout << summary.dump(2) << '\n';
        return;
    }
    ojson j = summary;
    j["manifest"] = {{"tool", "vibes"},        {"version", vibes::kToolVersion}, {"command", m.command},
                     {"config", m.config},     {"seeds", m.seeds},              {"inputs", m.inputs},
                     {"outputs", m.outputs},   {"started_utc", m.started_utc},  {"finished_utc", m.finished_utc}};
    std::cout << j.dump(2) << '\n';
}

vibes::RunManifest manifest_for(const std::string& command, const vibes::Config& cfg) {
    vibes::RunManifest m;
    m.command = command;
    m.config = vibes::config_to_json(cfg);
    m.seeds["root"] = cfg.seed;
    m.started_utc = vibes::utc_now();
    return m;
}

int run(int argc, char** argv) {
    CLI::App app{"vibes: vibrotactile texture rendering and psychophysics toolkit"};
    app.require_subcommand(1);
    Overrides ov;
    int jobs = 1;

    auto* synth = app.add_subcommand("synth", "Synthesize the texture bank (every grade x 2 variants)");
    fs::path synth_out = "traces";
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--seed", ov.seed, "Root seed");

    auto* render = app.add_subcommand("render", "Run traces through the pipeline and the actuator model");
    vibes::RenderArgs rargs;
    rargs.out_dir = "render";
    render->add_option("--index", rargs.index_trace, "Index-finger trace CSV")->required();
    render->add_option("--thumb", rargs.thumb_trace, "Thumb trace CSV (default: silent thumb channel)");
    render->add_option("--out", rargs.out_dir, "Output directory");
    render->add_option("--stream-chunk", rargs.stream_chunk, "Process in chunks of N samples (0 = batch)");
    render->add_option("--seed", ov.seed, "Root seed");

    auto* characterize = app.add_subcommand("characterize", "Compare a desired texture with its rendering");
    fs::path char_trace;
    std::optional<fs::path> char_csv, char_out;
    characterize->add_option("trace", char_trace, "Input trace CSV")->required();
    characterize->add_option("--csv", char_csv, "Write t,s,r samples for plotting");
    characterize->add_option("--out", char_out, "Write the JSON summary here");
    characterize->add_option("--seed", ov.seed, "Root seed");

    auto* experiment = app.add_subcommand("experiment", "Run one constant-stimuli session");
    vibes::ExperimentArgs eargs;
    experiment->add_option("--seed", ov.seed, "Root seed");
    experiment->add_option("--subject", eargs.subject, "Subject number")->check(CLI::PositiveNumber);
    experiment->add_option("--observer-sigma", eargs.observer_sigma, "Fixed observer noise (skips calibration)")
        ->check(CLI::PositiveNumber);
    experiment->add_option("--responses", eargs.scripted, "Scripted responses, one 0/1 per line");
    experiment->add_option("--out", eargs.out, "Trial log JSONL")->required();

    auto* identify = app.add_subcommand("identify", "Run an active identification session");
    vibes::IdentifyArgs iargs;
    std::string feedback = "on";
    identify->add_option("--feedback", feedback, "on or off")->check(CLI::IsMember({"on", "off"}));
    identify->add_option("--reps", iargs.reps, "Presentations per grade")->check(CLI::PositiveNumber);
    identify->add_option("--seed", ov.seed, "Root seed");
    identify->add_option("--out", iargs.out, "Identification log JSONL");

    auto* fit = app.add_subcommand("fit", "Fit the psychometric function to trial logs");
    std::vector<fs::path> fit_inputs;
    vibes::FitReportOptions fopts;
    std::optional<fs::path> fit_out;
    fit->add_option("--input", fit_inputs, "Trial log JSONL (repeatable; one per subject)")->required();
    fit->add_option("--bootstrap", fopts.bootstrap, "Bootstrap resamples (0 = none)")->check(CLI::NonNegativeNumber);
    fit->add_option("--seed", ov.seed, "Bootstrap seed");
    fit->add_flag("--random-intercept", fopts.random_intercept, "Per-subject random intercept model");
    fit->add_option("--out", fit_out, "Write the report here");

    auto* report = app.add_subcommand("report", "Pairwise success table or identification confusion matrix");
    std::vector<fs::path> report_inputs;
    std::optional<fs::path> confusion_csv, report_out;
    bool want_pairwise = false, want_confusion = false;
    report->add_flag("--pairwise", want_pairwise, "Pairwise success table from trial logs");
    report->add_flag("--confusion", want_confusion, "Confusion matrix from an identification log");
    report->add_option("--input", report_inputs, "Input log(s)")->required();
    report->add_option("--csv", confusion_csv, "Confusion matrix CSV output");
    report->add_option("--out", report_out, "Write the report here");

    auto* sus = app.add_subcommand("sus", "Score a System Usability Scale questionnaire");
    std::string sus_items;
    sus->add_option("--items", sus_items, "Ten comma-separated responses in 1..5")->required();

    auto* demo = app.add_subcommand("demo", "End-to-end run: synth, render, characterize, experiment, fit");
    vibes::DemoArgs dargs;
    dargs.out_dir = "demo";
    demo->add_option("--out", dargs.out_dir, "Output directory");
    demo->add_option("--subjects", dargs.subjects, "Virtual subjects")->check(CLI::PositiveNumber);
    demo->add_option("--bootstrap", dargs.bootstrap, "Bootstrap resamples")->check(CLI::NonNegativeNumber);
    demo->add_option("--seed", ov.seed, "Root seed");

    for (auto* sub : {synth, render, characterize, experiment, identify, fit, report, sus, demo}) {
        add_config_options(*sub, ov);
        sub->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? Exit::ok : Exit::usage;
    }
    if (report->parsed() && want_pairwise == want_confusion) {
        std::cerr << "report: pass exactly one of --pairwise or --confusion\n";
        return Exit::usage;
    }

    const auto cfg = build_config(ov);
    const std::string command = app.get_subcommands().front()->get_name();
    auto m = manifest_for(command, cfg);

    if (synth->parsed()) {
        const auto s = vibes::cmd_synth(cfg, synth_out);
        for (const auto& f : s["files"]) m.outputs.push_back((synth_out / f.get<std::string>()).string());
        m.seeds["synth"] = cfg.synth.seed;
        m.finished_utc = vibes::utc_now();
        vibes::write_manifest(synth_out / "manifest.json", m);
        std::cout << s.dump(2) << '\n';
    } else if (render->parsed()) {
        rargs.seed = cfg.seed;
        const auto s = vibes::cmd_render(cfg, rargs);
        m.inputs.push_back(rargs.index_trace.string());
        if (rargs.thumb_trace) m.inputs.push_back(rargs.thumb_trace->string());
        for (const auto& f : s["outputs"]) m.outputs.push_back((rargs.out_dir / f.get<std::string>()).string());
        m.finished_utc = vibes::utc_now();
        vibes::write_manifest(rargs.out_dir / "manifest.json", m);
        std::cout << s.dump(2) << '\n';
    } else if (characterize->parsed()) {
        const auto s = vibes::cmd_characterize(cfg, char_trace, char_csv, cfg.seed);
        m.inputs.push_back(char_trace.string());
        if (char_csv) m.outputs.push_back(char_csv->string());
        emit(s, m, char_out);
    } else if (experiment->parsed()) {
        eargs.seed = cfg.seed;
        const auto s = vibes::cmd_experiment(cfg, eargs);
        if (eargs.scripted) m.inputs.push_back(eargs.scripted->string());
        m.outputs.push_back(eargs.out.string());
        m.seeds["subject"] = eargs.subject;
        m.finished_utc = vibes::utc_now();
        vibes::write_manifest(fs::path(eargs.out.string() + ".manifest.json"), m);
        std::cout << s.dump(2) << '\n';
    } else if (identify->parsed()) {
        iargs.feedback_on = feedback == "on";
        iargs.seed = cfg.seed;
        const auto s = vibes::cmd_identify(cfg, iargs);
        if (iargs.out) {
            m.outputs.push_back(iargs.out->string());
            m.finished_utc = vibes::utc_now();
            vibes::write_manifest(fs::path(iargs.out->string() + ".manifest.json"), m);
            std::cout << s.dump(2) << '\n';
        } else {
            emit(s, m, std::nullopt);
        }
    } else if (fit->parsed()) {
        fopts.seed = cfg.seed;
        fopts.jobs = jobs;
        fopts.flat = cfg.flat_curve;
        const auto s = vibes::cmd_fit(fit_inputs, fopts);
        m.inputs = paths(fit_inputs);
        emit(s, m, fit_out);
        if (!s["converged"].get<bool>()) return Exit::nonconvergence;
    } else if (report->parsed()) {
        ojson s;
        if (want_pairwise) {
            s = vibes::cmd_report_pairwise(report_inputs);
        } else {
            if (report_inputs.size() != 1) throw vibes::ParameterError("--confusion takes exactly one identification log");
            s = vibes::cmd_report_confusion(report_inputs.front(), cfg, confusion_csv);
            if (confusion_csv) m.outputs.push_back(confusion_csv->string());
        }
        m.inputs = paths(report_inputs);
        emit(s, m, report_out);
    } else if (sus->parsed()) {
        emit(vibes::cmd_sus(sus_items), m, std::nullopt);
    } else if (demo->parsed()) {
        dargs.jobs = jobs;
        vibes::cmd_pipeline_demo(cfg, dargs);
        m.outputs.push_back((dargs.out_dir / "report.json").string());
        m.seeds["subjects"] = dargs.subjects;
        m.finished_utc = vibes::utc_now();
        vibes::write_manifest(dargs.out_dir / "manifest.json", m);
        std::cout << "report written to " << (dargs.out_dir / "report.json").string() << '\n';
    }
    return Exit::ok;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const vibes::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::nonconvergence;
    } catch (const vibes::ParameterError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::usage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return Exit::data;
    }
}
