#include "vibes/psychophysics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <json.hpp>

#include "text.hpp"
#include "vibes/errors.hpp"
#include "vibes/normal.hpp"

namespace vibes {

using ojson = nlohmann::ordered_json;

std::string to_string(PresentationOrder o) { return o == PresentationOrder::ref_first ? "ref_first" : "cmp_first"; }

PresentationOrder order_from_string(const std::string& s) {
    if (s == "ref_first") return PresentationOrder::ref_first;
    if (s == "cmp_first") return PresentationOrder::cmp_first;
    throw ParseError("unknown presentation order '" + s + "'");
}

ExperimentPlan build_plan(std::uint64_t seed, const PlanOptions& opts) {
    validate_ladder(opts.levels);
    if (opts.trials_per_level < 1) throw ParameterError("trials_per_level must be >= 1");
    if (opts.max_consecutive < 1) throw ParameterError("max_consecutive must be >= 1");
    const std::size_t levels = opts.levels.size();
    if (levels == 1 && opts.trials_per_level > opts.max_consecutive)
        throw ParameterError("a single level cannot satisfy the consecutive-repeat cap");

    ExperimentPlan plan;
    plan.levels = opts.levels;
    plan.trials_per_level = opts.trials_per_level;
    plan.max_consecutive = opts.max_consecutive;
    plan.seed = seed;

    const std::size_t total = levels * static_cast<std::size_t>(opts.trials_per_level);
    Rng order_rng(derive_seed(seed, "plan/order"));
    std::vector<std::size_t> sequence;
    for (int attempt = 0;; ++attempt) {
        if (attempt == 10000) throw ParameterError("could not build a plan under the consecutive-repeat cap");
        std::vector<int> remaining(levels, opts.trials_per_level);
        sequence.clear();
        std::size_t run_level = levels;
        int run_len = 0;
        bool dead_end = false;
        while (sequence.size() < total) {
            // Draw a level in proportion to its remaining trials, skipping one that would exceed the cap.
            std::vector<double> weights(levels, 0.0);
            for (std::size_t l = 0; l < levels; ++l)
                if (remaining[l] > 0 && !(l == run_level && run_len >= opts.max_consecutive))
                    weights[l] = remaining[l];
            if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) {
                dead_end = true;
                break;
            }
            std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
            const std::size_t l = pick(order_rng);
            --remaining[l];
            run_len = l == run_level ? run_len + 1 : 1;
            run_level = l;
            sequence.push_back(l);
        }
        if (!dead_end) break;
    }

    Rng variant_rng(derive_seed(seed, "plan/variants"));
    std::uniform_int_distribution<int> variant(1, 2);
    std::bernoulli_distribution coin(0.5);
    for (std::size_t l : sequence) {
        PlannedTrial t;
        t.comparison = opts.levels[l];
        t.ref_variant = variant(variant_rng);
        t.cmp_variant = variant(variant_rng);
        const bool cmp_first = coin(variant_rng);
        t.order = opts.randomize_order && cmp_first ? PresentationOrder::cmp_first : PresentationOrder::ref_first;
        plan.trials.push_back(t);
    }
    return plan;
}

std::string check_plan(const ExperimentPlan& plan) {
    const std::size_t expected = plan.levels.size() * static_cast<std::size_t>(plan.trials_per_level);
    if (plan.trials.size() != expected)
        return "plan has " + std::to_string(plan.trials.size()) + " trials, expected " + std::to_string(expected);
    for (const auto& level : plan.levels) {
        const auto n = std::count_if(plan.trials.begin(), plan.trials.end(),
                                     [&](const auto& t) { return t.comparison == level; });
        if (n != plan.trials_per_level)
            return "level " + level.fepa_grade + " appears " + std::to_string(n) + " times";
    }
    int run = 0;
    for (std::size_t i = 0; i < plan.trials.size(); ++i) {
        const auto& t = plan.trials[i];
        if (t.ref_variant < 1 || t.ref_variant > 2 || t.cmp_variant < 1 || t.cmp_variant > 2)
            return "variant out of range at trial " + std::to_string(i + 1);
        run = i > 0 && t.comparison == plan.trials[i - 1].comparison ? run + 1 : 1;
        if (run > plan.max_consecutive) return "run longer than cap at trial " + std::to_string(i + 1);
    }
    return {};
}

void ObserverModel::validate() const {
    if (!(noise_sigma > 0.0) || !std::isfinite(noise_sigma)) throw ParameterError("observer noise_sigma must be > 0");
    if (!(lapse_rate >= 0.0 && lapse_rate <= 1.0)) throw ParameterError("observer lapse_rate must lie in [0, 1]");
    if (!std::isfinite(bias)) throw ParameterError("observer bias must be finite");
}

void ObserverModel::validate_for_experiment() const {
    validate();
    if (lapse_rate > 0.1) throw ParameterError("observer lapse_rate must not exceed 0.1");
}

double percept(const AccelTrace& rendered, const ObserverModel& observer) {
    switch (observer.percept_map) {
        case PerceptMap::rms:
            return rms_x(rendered);
    }
    return 0.0;
}

double response_probability(double mu_ref, double mu_cmp, const ObserverModel& observer) {
    const double p = norm_cdf((mu_cmp - mu_ref - observer.bias) / (std::numbers::sqrt2 * observer.noise_sigma));
    return 0.5 * observer.lapse_rate + (1.0 - observer.lapse_rate) * p;
}

bool respond_from_percepts(double mu_ref, double mu_cmp, const ObserverModel& observer, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (unit(rng) < observer.lapse_rate) return unit(rng) < 0.5;
    std::normal_distribution<double> noise(0.0, observer.noise_sigma);
    const double cmp = mu_cmp + noise(rng);
    const double ref = mu_ref + noise(rng);
    return cmp > ref + observer.bias;
}

bool simulate_observer_response(const AccelTrace& ref_render, const AccelTrace& cmp_render,
                                const ObserverModel& observer, std::uint64_t seed) {
    observer.validate();
    if (ref_render.empty() || cmp_render.empty()) throw ParameterError("observer needs non-empty renders");
    Rng rng(seed);
    return respond_from_percepts(percept(ref_render, observer), percept(cmp_render, observer), observer, rng);
}

bool SimulatedResponder::respond(int trial_index, const AccelTrace& ref_render, const AccelTrace& cmp_render) {
    return simulate_observer_response(ref_render, cmp_render, observer_,
                                      derive_seed(seed_, "response", static_cast<std::uint64_t>(trial_index)));
}

bool ScriptedResponder::respond(int trial_index, const AccelTrace&, const AccelTrace&) {
    if (trial_index < 1 || static_cast<std::size_t>(trial_index) > responses_.size())
        throw ValidationError("scripted responses exhausted at trial " + std::to_string(trial_index));
    return responses_[static_cast<std::size_t>(trial_index) - 1];
}

std::vector<bool> load_scripted_responses(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open response file " + path.string());
    std::vector<bool> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto v = text::trim(line);
        if (v.empty()) continue;
        if (v == "0") out.push_back(false);
        else if (v == "1") out.push_back(true);
        else throw ParseError("expected 0 or 1", lineno);
    }
    return out;
}

StimulusRenderer::StimulusRenderer(const TextureBank& bank, PipelineConfig pipeline, ActuatorModel actuator)
    : bank_(bank), pipeline_(pipeline), actuator_(actuator) {
    actuator_.validate();
    for (std::size_t i = 0; i < bank_.ladder.size(); ++i) {
        for (std::size_t v = 0; v < bank_.traces[i].size(); ++v) {
            const auto& tr = bank_.traces[i][v];
            if (tr.empty()) continue;
            const auto channel = process_trace(tr, pipeline_);
            clean_[{bank_.ladder[i].fepa_grade, static_cast<int>(v) + 1}] =
                render_clean(channel.pwm, actuator_, channel.carrier, channel.rate_hz);
        }
    }
}

bool StimulusRenderer::has(const std::string& grade, int variant) const { return clean_.count({grade, variant}) > 0; }

AccelTrace StimulusRenderer::render(const std::string& grade, int variant, std::uint64_t noise_seed) const {
    auto it = clean_.find({grade, variant});
    if (it == clean_.end())
        throw ValidationError("no texture variant " + std::to_string(variant) + " for " + grade);
    AccelTrace out = it->second;
    add_noise(out, actuator_.noise_floor_rms, noise_seed);
    return out;
}

std::vector<TrialRecord> run_experiment(const ExperimentPlan& plan, const StimulusRenderer& renderer,
                                        Responder& responder, std::uint64_t seed, const TrialSink& sink) {
    const auto& ref = reference_sandpaper();
    for (const auto& t : plan.trials) {
        if (!renderer.has(ref.fepa_grade, t.ref_variant))
            throw ValidationError("texture bank lacks reference " + ref.fepa_grade + " variant " + std::to_string(t.ref_variant));
        if (!renderer.has(t.comparison.fepa_grade, t.cmp_variant))
            throw ValidationError("texture bank lacks " + t.comparison.fepa_grade + " variant " +
                                  std::to_string(t.cmp_variant));
    }

    std::vector<TrialRecord> log;
    log.reserve(plan.trials.size());
    for (std::size_t i = 0; i < plan.trials.size(); ++i) {
        const auto& t = plan.trials[i];
        const auto idx = static_cast<std::uint64_t>(i + 1);
        const auto ref_render = renderer.render(ref.fepa_grade, t.ref_variant, derive_seed(seed, "render/ref", idx));
        const auto cmp_render = renderer.render(t.comparison.fepa_grade, t.cmp_variant, derive_seed(seed, "render/cmp", idx));
        TrialRecord rec;
        rec.trial_index = static_cast<int>(i + 1);
        rec.reference = ref;
        rec.comparison = t.comparison;
        rec.ref_variant = t.ref_variant;
        rec.cmp_variant = t.cmp_variant;
        rec.order = t.order;
        rec.response_cmp_rougher = responder.respond(rec.trial_index, ref_render, cmp_render);
        log.push_back(rec);
        if (sink) sink(rec);
    }
    return log;
}

std::vector<TrialRecord> run_experiment(const ExperimentPlan& plan, const PipelineConfig& pipeline_cfg,
                                        const ActuatorModel& actuator, Responder& responder, const TextureBank& bank,
                                        std::uint64_t seed, const TrialSink& sink) {
    const StimulusRenderer renderer(bank, pipeline_cfg, actuator);
    return run_experiment(plan, renderer, responder, seed, sink);
}

std::vector<double> measure_percepts(const StimulusRenderer& renderer, const ObserverModel& observer, int reps,
                                     std::uint64_t seed) {
    const auto& ladder = renderer.bank().ladder;
    std::vector<double> means;
    for (const auto& spec : ladder) {
        double sum = 0.0;
        int n = 0;
        for (int v = 1; v <= 2; ++v) {
            for (int r = 0; r < reps; ++r) {
                const auto s = derive_seed(derive_seed(seed, "percept/" + spec.fepa_grade, static_cast<std::uint64_t>(v)), "rep",
                                           static_cast<std::uint64_t>(r));
                sum += percept(renderer.render(spec.fepa_grade, v, s), observer);
                ++n;
            }
        }
        means.push_back(sum / n);
    }
    return means;
}

ObserverModel calibrate_observer(const std::vector<SandpaperSpec>& ladder, const std::vector<double>& mean_percepts,
                                 const SandpaperSpec& reference, double beta0, double beta1) {
    if (ladder.size() != mean_percepts.size() || ladder.size() < 2)
        throw ParameterError("calibration needs one mean percept per ladder level (>= 2 levels)");
    if (!(beta1 > 0.0)) throw ParameterError("calibration target slope must be positive");
    const double n = static_cast<double>(ladder.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0, ref_percept = 0.0;
    bool found_ref = false;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        const double x = ladder[i].grit_um, y = mean_percepts[i];
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        if (ladder[i] == reference) {
            ref_percept = y;
            found_ref = true;
        }
    }
    if (!found_ref) throw ValidationError("reference " + reference.fepa_grade + " is not in the ladder");
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    if (!(slope > 0.0)) throw ValidationError("percepts do not increase with grit size; cannot calibrate");

    ObserverModel obs;
    obs.noise_sigma = slope / (std::numbers::sqrt2 * beta1);
    const double target_pse = -beta0 / beta1;
    obs.bias = slope * target_pse + intercept - ref_percept;
    obs.lapse_rate = 0.0;
    return obs;
}

std::vector<IdentificationTrial> run_identification(const IdentificationOptions& opts, const ObserverModel& observer,
                                                    const StimulusRenderer& renderer, std::uint64_t seed) {
    observer.validate();
    if (opts.n_reps < 1) throw ParameterError("identification needs n_reps >= 1");
    if (!(opts.degradation > 1.0)) throw ParameterError("no-feedback degradation factor must exceed 1");
    const auto& ladder = renderer.bank().ladder;
    const std::size_t K = ladder.size();

    Rng rng(derive_seed(seed, "identification"));
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < K; ++i)
        for (int r = 0; r < opts.n_reps; ++r) order.push_back(i);
    std::shuffle(order.begin(), order.end(), rng);

    const double sigma = opts.feedback_on ? observer.noise_sigma : observer.noise_sigma * opts.degradation;
    std::normal_distribution<double> noise(0.0, sigma);
    std::uniform_int_distribution<int> variant(1, 2);
    std::uniform_int_distribution<std::size_t> guess(0, K - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<IdentificationTrial> trials;
    for (std::size_t t = 0; t < order.size(); ++t) {
        const auto& presented = ladder[order[t]];
        std::size_t chosen = 0;
        const auto shown = renderer.render(presented.fepa_grade, variant(rng), derive_seed(seed, "id/presented", t));
        const double target = percept(shown, observer) + noise(rng);
        if (unit(rng) < observer.lapse_rate) {
            chosen = guess(rng);
        } else {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < K; ++c) {
                const auto probe = renderer.render(ladder[c].fepa_grade, variant(rng), derive_seed(seed, "id/candidate", t * K + c));
                const double d = std::abs(percept(probe, observer) + noise(rng) - target);
                if (d < best) {
                    best = d;
                    chosen = c;
                }
            }
        }
        trials.push_back({presented, ladder[chosen], opts.feedback_on});
    }
    return trials;
}

std::string trial_to_json(const TrialRecord& rec) {
    ojson j;
    j["trial"] = rec.trial_index;
    j["reference"] = {{"grade", rec.reference.fepa_grade}, {"grit_um", rec.reference.grit_um}};
    j["comparison"] = {{"grade", rec.comparison.fepa_grade}, {"grit_um", rec.comparison.grit_um}};
    j["ref_variant"] = rec.ref_variant;
    j["cmp_variant"] = rec.cmp_variant;
    j["order"] = to_string(rec.order);
    j["response_cmp_rougher"] = rec.response_cmp_rougher;
    return j.dump();
}

TrialRecord trial_from_json(const std::string& line, std::size_t lineno) {
    try {
        const auto j = ojson::parse(line);
        TrialRecord rec;
        rec.trial_index = j.at("trial").get<int>();
        rec.reference = {j.at("reference").at("grade").get<std::string>(), j.at("reference").at("grit_um").get<double>()};
        rec.comparison = {j.at("comparison").at("grade").get<std::string>(), j.at("comparison").at("grit_um").get<double>()};
        rec.ref_variant = j.at("ref_variant").get<int>();
        rec.cmp_variant = j.at("cmp_variant").get<int>();
        rec.order = order_from_string(j.at("order").get<std::string>());
        rec.response_cmp_rougher = j.at("response_cmp_rougher").get<bool>();
        if (rec.reference.fepa_grade != reference_sandpaper().fepa_grade)
            throw ParseError("reference must be " + reference_sandpaper().fepa_grade, lineno);
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad trial record: ") + e.what(), lineno);
    }
}

namespace {

std::string header_line(const std::string& extra) {
    ojson h;
    h["schema"] = kTrialLogSchema;
    h["version"] = kTrialLogVersion;
    h["reference"] = reference_sandpaper().fepa_grade;
    const auto more = ojson::parse(extra);
    for (auto it = more.begin(); it != more.end(); ++it) h[it.key()] = it.value();
    return h.dump();
}

}  // namespace

struct TrialLogWriter::Impl {
    std::ofstream out;
};

TrialLogWriter::TrialLogWriter(const std::filesystem::path& path, const std::string& header_json_extra)
    : impl_(std::make_unique<Impl>()) {
    impl_->out.open(path, std::ios::binary);
    if (!impl_->out) throw IoError("cannot write trial log " + path.string());
    impl_->out << header_line(header_json_extra) << '\n';
    impl_->out.flush();
}

TrialLogWriter::~TrialLogWriter() = default;

void TrialLogWriter::append(const TrialRecord& rec) {
    impl_->out << trial_to_json(rec) << '\n';
    impl_->out.flush();
    if (!impl_->out) throw IoError("trial log write failed");
}

void write_trial_log(const std::filesystem::path& path, const std::vector<TrialRecord>& records,
                     const std::string& header_json_extra) {
    TrialLogWriter w(path, header_json_extra);
    for (const auto& r : records) w.append(r);
}

TrialLog read_trial_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open trial log " + path.string());
    TrialLog log;
    std::string line;
    if (!std::getline(in, line)) throw ParseError("empty trial log", 1);
    try {
        const auto h = ojson::parse(line);
        if (h.value("schema", "") != kTrialLogSchema || h.value("version", 0) != kTrialLogVersion)
            throw ParseError("unsupported trial log schema", 1);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad trial log header: ") + e.what(), 1);
    }
    log.header_json = line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        log.records.push_back(trial_from_json(line, lineno));
    }
    return log;
}

}  // namespace vibes
