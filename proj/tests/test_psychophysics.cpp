#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "vibes/errors.hpp"
#include "vibes/psychophysics.hpp"

using namespace vibes;
namespace fs = std::filesystem;

namespace {

const StimulusRenderer& shared_renderer() {
    static const StimulusRenderer r = [] {
        PipelineConfig p;
        p.scale_k = 0.06;
        return StimulusRenderer(synth_bank(default_ladder(), SynthParams{}), p, ActuatorModel{});
    }();
    return r;
}

fs::path tmp(const std::string& name) {
    auto dir = fs::temp_directory_path() / "vibes_test_psy";
    fs::create_directories(dir);
    return dir / name;
}

AccelTrace flat(double level, std::size_t n = 100) {
    return trace_from_scalar(std::vector<double>(n, level), 1000);
}

}  // namespace

TEST_CASE("plans have 20 trials per level and bounded runs") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto plan = build_plan(seed);
        REQUIRE(plan.trials.size() == 100);
        CHECK(check_plan(plan).empty());
        std::map<std::string, int> count;
        int run = 0;
        for (std::size_t i = 0; i < plan.trials.size(); ++i) {
            const auto& t = plan.trials[i];
            ++count[t.comparison.fepa_grade];
            run = i > 0 && plan.trials[i - 1].comparison == t.comparison ? run + 1 : 1;
            CHECK(run <= 3);
            CHECK((t.ref_variant == 1 || t.ref_variant == 2));
            CHECK((t.cmp_variant == 1 || t.cmp_variant == 2));
        }
        for (const auto& [g, c] : count) CHECK(c == 20);
    }
}

TEST_CASE("plans are deterministic per seed") {
    const auto a = build_plan(5), b = build_plan(5), c = build_plan(6);
    bool same = true, differ = false;
    for (std::size_t i = 0; i < a.trials.size(); ++i) {
        same = same && a.trials[i].comparison == b.trials[i].comparison && a.trials[i].order == b.trials[i].order &&
               a.trials[i].ref_variant == b.trials[i].ref_variant && a.trials[i].cmp_variant == b.trials[i].cmp_variant;
        differ = differ || !(a.trials[i].comparison == c.trials[i].comparison);
    }
    CHECK(same);
    CHECK(differ);
}

TEST_CASE("check_plan catches violations") {
    auto plan = build_plan(1);
    plan.trials.pop_back();
    CHECK_FALSE(check_plan(plan).empty());
    PlanOptions o;
    o.randomize_order = false;
    for (const auto& t : build_plan(2, o).trials) CHECK(t.order == PresentationOrder::ref_first);
    o.levels = {default_ladder()[0]};
    CHECK_THROWS_AS(build_plan(1, o), ParameterError);
}

TEST_CASE("noiseless observer follows the percept order") {
    ObserverModel obs;
    obs.noise_sigma = 1e-9;
    for (std::uint64_t s = 0; s < 100; ++s) {
        CHECK(simulate_observer_response(flat(1.0), flat(1.1), obs, s));
        CHECK_FALSE(simulate_observer_response(flat(1.1), flat(1.0), obs, s));
    }
}

TEST_CASE("identical traces give a coin flip") {
    ObserverModel obs;
    obs.noise_sigma = 0.2;
    int yes = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) yes += simulate_observer_response(flat(1.0), flat(1.0), obs, s);
    CHECK(std::abs(yes / 10000.0 - 0.5) <= 0.03);
    obs.lapse_rate = 1.0;
    yes = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) yes += simulate_observer_response(flat(0.1), flat(5.0), obs, s);
    CHECK(std::abs(yes / 10000.0 - 0.5) <= 0.03);
}

TEST_CASE("empirical response rate matches the analytic probability") {
    ObserverModel obs;
    obs.noise_sigma = 0.3;
    obs.bias = 0.05;
    obs.lapse_rate = 0.04;
    for (double d : {-0.5, -0.1, 0.0, 0.2, 0.6}) {
        const double p = obs.lapse_rate / 2 +
                         (1 - obs.lapse_rate) * oracle::phi((d - obs.bias) / (std::sqrt(2.0) * obs.noise_sigma));
        CHECK(response_probability(1.0, 1.0 + d, obs) == doctest::Approx(p).epsilon(1e-12));
        Rng rng(derive_seed(3, "mc", std::uint64_t(1000 * (d + 1))));
        const int n = 20000;
        int yes = 0;
        for (int i = 0; i < n; ++i) yes += respond_from_percepts(1.0, 1.0 + d, obs, rng);
        const double se = std::sqrt(p * (1 - p) / n);
        CHECK(std::abs(yes / double(n) - p) <= 3 * se);
    }
}

TEST_CASE("observer validation") {
    ObserverModel obs;
    obs.noise_sigma = 0;
    CHECK_THROWS_AS(obs.validate(), ParameterError);
    obs.noise_sigma = 0.1;
    obs.lapse_rate = 0.5;
    CHECK_NOTHROW(obs.validate());
    CHECK_THROWS_AS(obs.validate_for_experiment(), ParameterError);
    CHECK_THROWS(simulate_observer_response(AccelTrace{}, flat(1), ObserverModel{}, 1));
}

TEST_CASE("perfect observer gives a step psychometric function") {
    const auto& r = shared_renderer();
    ObserverModel obs;
    obs.noise_sigma = 1e-9;
    SimulatedResponder resp(obs, 11);
    const auto recs = run_experiment(build_plan(3), r, resp, 12);
    REQUIRE(recs.size() == 100);
    for (const auto& rec : recs) {
        CHECK(rec.reference.fepa_grade == "P120");
        if (rec.comparison.grit_um > 127) CHECK(rec.response_cmp_rougher);
        if (rec.comparison.grit_um < 127) CHECK_FALSE(rec.response_cmp_rougher);
    }
}

TEST_CASE("scripted responses are echoed and sessions are deterministic") {
    const auto& r = shared_renderer();
    std::vector<bool> script;
    for (int i = 0; i < 100; ++i) script.push_back((i * 7) % 3 == 0);
    {
        std::ofstream f(tmp("script.txt"));
        for (bool b : script) f << (b ? 1 : 0) << '\n';
    }
    ScriptedResponder sr(load_scripted_responses(tmp("script.txt")));
    const auto recs = run_experiment(build_plan(4), r, sr, 1);
    for (std::size_t i = 0; i < recs.size(); ++i) CHECK(recs[i].response_cmp_rougher == script[i]);

    ObserverModel obs;
    obs.noise_sigma = 0.3;
    SimulatedResponder a(obs, 9), b(obs, 9);
    CHECK(run_experiment(build_plan(4), r, a, 2) == run_experiment(build_plan(4), r, b, 2));

    ScriptedResponder short_script(std::vector<bool>(10, true));
    CHECK_THROWS_AS(run_experiment(build_plan(4), r, short_script, 1), ValidationError);
    std::ofstream(tmp("bad_script.txt")) << "1\n0\nyes\n";
    CHECK_THROWS_AS(load_scripted_responses(tmp("bad_script.txt")), ParseError);
}

TEST_CASE("missing variant fails before any trial") {
    TextureBank bank = synth_bank(default_ladder(), SynthParams{});
    bank.traces[4].pop_back();
    PipelineConfig p;
    p.scale_k = 0.06;
    const StimulusRenderer r(bank, p, ActuatorModel{});
    ObserverModel obs;
    SimulatedResponder resp(obs, 1);
    int calls = 0;
    CHECK_THROWS_AS(run_experiment(build_plan(1), r, resp, 1, [&](const TrialRecord&) { ++calls; }), ValidationError);
    CHECK(calls == 0);
}

TEST_CASE("calibrated observer reproduces the target psychometric function") {
    const auto& r = shared_renderer();
    const auto means = measure_percepts(r, ObserverModel{}, 4, 1);
    for (std::size_t i = 1; i < means.size(); ++i) CHECK(means[i] < means[i - 1]);
    const double b0 = -151.96 / 87.30, b1 = 1 / 87.30;
    const auto obs = calibrate_observer(default_ladder(), means, reference_sandpaper(), b0, b1);
    // Along the fitted percept line, P(cmp rougher) at grit x equals Phi(b0 + b1 x).
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < means.size(); ++i) {
        const double x = default_ladder()[i].grit_um;
        sx += x, sy += means[i], sxx += x * x, sxy += x * means[i];
    }
    const double a = (5 * sxy - sx * sy) / (5 * sxx - sx * sx), c = (sy - a * sx) / 5;
    for (double x : {18.0, 65.0, 127.0, 151.96, 195.0, 264.0})
        CHECK(response_probability(means[2], a * x + c, obs) == doctest::Approx(oracle::phi(b0 + b1 * x)).epsilon(1e-9));
}

TEST_CASE("identification") {
    const auto& r = shared_renderer();
    ObserverModel sharp;
    sharp.noise_sigma = 1e-9;
    IdentificationOptions opts;
    const auto t = run_identification(opts, sharp, r, 3);
    REQUIRE(t.size() == 25);
    std::map<std::string, int> shown;
    for (const auto& x : t) {
        CHECK(x.presented == x.chosen);
        ++shown[x.presented.fepa_grade];
    }
    for (const auto& [g, n] : shown) CHECK(n == 5);

    ObserverModel guess;
    guess.lapse_rate = 1.0;
    int correct = 0, total = 0;
    for (std::uint64_t s = 0; s < 200; ++s)
        for (const auto& x : run_identification(opts, guess, r, s)) correct += x.presented == x.chosen, ++total;
    CHECK(std::abs(correct / double(total) - 0.2) < 0.03);

    opts.degradation = 1.0;
    CHECK_THROWS_AS(run_identification(opts, sharp, r, 1), ParameterError);
}

TEST_CASE("trial log round-trip") {
    const auto& r = shared_renderer();
    ObserverModel obs;
    obs.noise_sigma = 0.3;
    SimulatedResponder resp(obs, 1);
    const auto recs = run_experiment(build_plan(8), r, resp, 1);
    write_trial_log(tmp("log.jsonl"), recs, R"({"seed":8})");
    const auto log = read_trial_log(tmp("log.jsonl"));
    CHECK(log.records == recs);
    CHECK(log.header_json.find("vibes.trial-log") != std::string::npos);

    {
        TrialLogWriter w(tmp("stream.jsonl"));
        w.append(recs[0]);
        CHECK(read_trial_log(tmp("stream.jsonl")).records.size() == 1);
        w.append(recs[1]);
    }
    CHECK(read_trial_log(tmp("stream.jsonl")).records.size() == 2);

    std::ofstream(tmp("badlog.jsonl")) << R"({"schema":"vibes.trial-log","version":1})" << "\n{oops\n";
    try {
        read_trial_log(tmp("badlog.jsonl"));
        FAIL("expected an error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    std::ofstream(tmp("other.jsonl")) << R"({"schema":"something-else"})" << "\n";
    CHECK_THROWS_AS(read_trial_log(tmp("other.jsonl")), ParseError);
}
