// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "vibes/errors.hpp"
#include "vibes/parallel.hpp"
#include "vibes/workflow.hpp"

using namespace vibes;
namespace fs = std::filesystem;

namespace {

constexpr double kJnd = 87.30, kPse = 151.96;
const double kB1 = 1.0 / kJnd, kB0 = -kPse / kJnd;

int jobs() {
    if (const char* e = std::getenv("VIBES_JOBS")) return std::max(1, std::atoi(e));
    return std::max(1u, std::thread::hardware_concurrency());
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const Prepared& calibrated() {
    static const Prepared p = prepare(Config{});
    return p;
}

FitDataset pooled_study(const Prepared& prep, std::uint64_t study_seed, int subjects) {
    FitDataset all;
    for (int s = 1; s <= subjects; ++s) {
        const auto d = dataset_from_records(run_subject(prep, s, study_seed).records, s);
        all.trials.insert(all.trials.end(), d.trials.begin(), d.trials.end());
    }
    return all;
}

Outcome closed_loop() {
    const auto& prep = calibrated();
    const int studies = 100;
    std::vector<PsychometricFit> fits(studies);
    std::vector<BootstrapResult> boots(studies);
    for (int i = 0; i < studies; ++i) {
        const auto seed = derive_seed(2024, "acceptance/study", std::uint64_t(i));
        const auto data = pooled_study(prep, seed, 12);
        fits[i] = fit_probit(data);
        BootstrapOptions bo;
        bo.n_resamples = 2000;
        bo.seed = derive_seed(seed, "bootstrap");
        bo.jobs = jobs();
        boots[i] = bootstrap(data, bo);
    }
    int cover_jnd = 0, cover_pse = 0, cover_both = 0, within = 0;
    for (int i = 0; i < studies; ++i) {
        const bool cj = boots[i].ci_jnd.first <= kJnd && kJnd <= boots[i].ci_jnd.second;
        const bool cp = boots[i].ci_pse.first <= kPse && kPse <= boots[i].ci_pse.second;
        cover_jnd += cj, cover_pse += cp, cover_both += cj && cp;
        within += std::abs(fits[i].jnd_um / kJnd - 1) <= 0.10 && std::abs(fits[i].pse_um / kPse - 1) <= 0.10;
    }
    const auto& f0 = fits[0];
    const bool point = std::abs(f0.jnd_um / kJnd - 1) <= 0.10 && std::abs(f0.pse_um / kPse - 1) <= 0.10;
    return {point && cover_jnd >= 89 && cover_pse >= 89,
            fmt("study 1: JND %.2f um (%+.1f%%), PSE %.2f um (%+.1f%%), CI JND [%.2f, %.2f]; over %d studies: "
                "within 10%% %d, CI covers JND %d, PSE %d, both %d",
                f0.jnd_um, 100 * (f0.jnd_um / kJnd - 1), f0.pse_um, 100 * (f0.pse_um / kPse - 1), boots[0].ci_jnd.first,
                boots[0].ci_jnd.second, studies, within, cover_jnd, cover_pse, cover_both)};
}

Outcome formulas() {
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u0(-10, 10), u1(1e-4, 2);
    double worst = 0;
    bool ok = true;
    for (int i = 0; i < 20; ++i) {
        const double b0 = u0(g), b1 = u1(g);
        const double j = 1.0 / b1, p = -b0 / b1;
        worst = std::max({worst, std::abs(jnd(b1) - j) / j, std::abs(pse(b0, b1) - p) / std::abs(p)});
        PsychometricFit f;
        f.beta0 = b0, f.beta1 = b1;
        ok = ok && jnd(f) == jnd(b1) && pse(f) == pse(b0, b1);
    }
    bool throws = false;
    try {
        jnd(0.0);
    } catch (const ConvergenceError&) {
        throws = true;
    }
    return {ok && throws && worst <= 1e-12, fmt("20 pairs, worst relative error %.2e; beta1 <= 0 rejected", worst)};
}

Outcome grid_oracle() {
    const std::vector<double> levels{264, 195, 127, 65, 18};
    std::mt19937_64 g(3);
    double worst0 = 0, worst1 = 0;
    int done = 0, redrawn = 0;
    while (done < 10) {
        std::uniform_real_distribution<double> u(0, 1);
        std::vector<std::pair<double, int>> pairs;
        FitDataset d;
        for (double x : levels)
            for (int k = 0; k < 10; ++k) {
                const int y = u(g) < oracle::phi(kB0 + kB1 * x);
                pairs.push_back({x, y});
                d.trials.push_back({x, y == 1});
            }
        const auto f = fit_probit(d);
        if (!f.converged) {
            ++redrawn;
            continue;
        }
        const auto [o0, o1] = oracle::grid_search_ml(pairs, 1e-6);
        worst0 = std::max(worst0, std::abs(f.beta0 - o0));
        worst1 = std::max(worst1, std::abs(f.beta1 - o1));
        ++done;
    }
    return {worst0 < 2e-4 && worst1 < 2e-4,
            fmt("10 datasets of 50 trials (%d separated redrawn): max |d beta0| %.1e, max |d beta1| %.1e", redrawn,
                worst0, worst1)};
}

Outcome pipeline_physics() {
    const PipelineConfig cfg;
    const double fs = SynthParams{}.rate_hz;
    auto measured_gain = [&](double f) {
        std::vector<double> x(std::size_t(6 * fs));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = f > 0 ? std::sin(2 * std::numbers::pi * f * double(i) / fs) : 1.0;
        const auto y = bandpass_filter(trace_from_scalar(x, fs), cfg);
        double in = 0, out = 0;
        for (std::size_t i = std::size_t(4 * fs); i < x.size(); ++i) in += x[i] * x[i], out += y.samples[i].ax * y.samples[i].ax;
        return std::sqrt(out / in);
    };
    const double db200 = 20 * std::log10(measured_gain(200)), db10 = 20 * std::log10(measured_gain(10));
    const double g0 = measured_gain(0);
    const double db0 = g0 > 0 ? 20 * std::log10(g0) : -INFINITY;

    const auto trace = synth_texture({"P60", 264}, SynthParams{});
    bool identical = true;
    for (Reduction red : {Reduction::magnitude, Reduction::dft321}) {
        PipelineConfig c = cfg;
        c.reduction = red;
        const auto batch = process_trace(trace, c);
        for (std::size_t chunk : {1u, 7u, 64u, 1024u}) {
            const auto s = process_trace(trace, c, chunk);
            identical = identical && s.pwm == batch.pwm && s.carrier == batch.carrier;
        }
    }
    return {std::abs(db200) <= 0.5 && db10 <= -20 && db0 <= -40 && identical,
            fmt("200 Hz %+.3f dB, 10 Hz %.1f dB, DC %.1f dB; chunks {1,7,64,1024} bit-identical: %s", db200, db10, db0,
                identical ? "yes" : "no")};
}

Outcome plans() {
    int bad = 0;
    long cells[2][2] = {{0, 0}, {0, 0}};
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto plan = build_plan(derive_seed(5, "acceptance/plan", s));
        std::map<std::string, int> count;
        int run = 0, longest = 0;
        for (std::size_t i = 0; i < plan.trials.size(); ++i) {
            const auto& t = plan.trials[i];
            ++count[t.comparison.fepa_grade];
            run = i > 0 && plan.trials[i - 1].comparison == t.comparison ? run + 1 : 1;
            longest = std::max(longest, run);
            ++cells[t.ref_variant - 1][t.cmp_variant - 1];
        }
        bool ok = plan.trials.size() == 100 && count.size() == 5 && longest <= 3;
        for (const auto& [g, c] : count) ok = ok && c == 20;
        bad += !ok;
    }
    const double total = cells[0][0] + cells[0][1] + cells[1][0] + cells[1][1];
    double chi2 = 0;
    for (auto& row : cells)
        for (long c : row) chi2 += (c - total / 4) * (c - total / 4) / (total / 4);
    const double p = oracle::chi2_sf_3(chi2);
    return {bad == 0 && p > 0.01, fmt("%d of 1000 plans invalid; variant cells %ld/%ld/%ld/%ld, chi2 %.2f, p = %.3f", bad,
                                      cells[0][0], cells[0][1], cells[1][0], cells[1][1], chi2, p)};
}

Outcome pairwise() {
    const auto& prep = calibrated();
    const int sessions = 100;
    std::vector<PairwiseTable> tables(sessions);
    parallel_for(sessions, jobs(), [&](std::size_t i) {
        tables[i] = pairwise_success_table(run_subject(prep, 1, derive_seed(6, "acceptance/session", i)).records);
    });
    double s13 = 0, s33 = 0, s53 = 0;
    for (const auto& t : tables) {
        s13 += t.rows[0].pct_success / sessions;
        s33 += t.rows[2].pct_success / sessions;
        s53 += t.rows[4].pct_success / sessions;
    }
    const auto& mp = prep.mean_percepts;
    const double g13 = response_probability(mp[2], mp[0], prep.observer);
    const double g53 = 1 - response_probability(mp[2], mp[4], prep.observer);
    return {s13 >= 0.90 && s53 >= 0.90 && s33 >= 0.35 && s33 <= 0.65,
            fmt("mean success over %d sessions: 1-3 %.1f%%, 5-3 %.1f%%, 3-3 %.1f%%; generating probabilities 1-3 %.1f%%, "
                "5-3 %.1f%%",
                sessions, 100 * s13, 100 * s53, 100 * s33, 100 * g13, 100 * g53)};
}

double mean_identification(const ObserverModel& obs, bool feedback, double degradation, int sessions,
                           const std::string& stream) {
    const auto& r = *calibrated().renderer;
    IdentificationOptions o;
    o.feedback_on = feedback;
    o.degradation = degradation;
    std::vector<long> correct(std::size_t(sessions), 0), total(std::size_t(sessions), 0);
    parallel_for(correct.size(), jobs(), [&](std::size_t i) {
        for (const auto& t : run_identification(o, obs, r, derive_seed(7, stream, i)))
            correct[i] += t.presented == t.chosen, ++total[i];
    });
    return double(std::accumulate(correct.begin(), correct.end(), 0L)) /
           double(std::accumulate(total.begin(), total.end(), 0L));
}

Outcome identification() {
    const auto obs = calibrated().observer;
    const int n = 1000;
    const double on = mean_identification(obs, true, 2.0, n, "acceptance/id");
    std::string detail = fmt("feedback on %.3f;", on);
    bool ordered = true;
    for (double d : {1.5, 2.0, 3.0}) {
        const double off = mean_identification(obs, false, d, n, "acceptance/id");
        ordered = ordered && on > off;
        detail += fmt(" off(x%.1f) %.3f;", d, off);
    }
    ObserverModel sharp = obs;
    sharp.noise_sigma = 1e-12;
    const double noiseless = mean_identification(sharp, true, 2.0, 100, "acceptance/id-sharp");
    ObserverModel guess = obs;
    guess.lapse_rate = 1.0;
    const double chance = mean_identification(guess, true, 2.0, n, "acceptance/id-guess");
    detail += fmt(" noiseless %.3f; pure guess %.3f", noiseless, chance);
    return {ordered && noiseless == 1.0 && std::abs(chance - 0.2) <= 0.03, detail};
}

Outcome sus() {
    const double a = sus_score(parse_sus("5,1,5,1,5,1,5,1,5,1"));
    const double b = sus_score(parse_sus("3,3,3,3,3,3,3,3,3,3"));
    // The worked example's term list (4+3+4+4+4)+(3+4+3+3+3) corresponds to item 7 = 5; the printed item
    // list has item 7 = 4, which the same formula scores at 85.
    const double c = sus_score(parse_sus("5,2,4,1,5,2,5,2,5,2"));
    const double c_printed = sus_score(parse_sus("5,2,4,1,5,2,4,2,5,2"));
    std::mt19937_64 g(8);
    std::uniform_int_distribution<int> v(1, 5), item(0, 9);
    int violations = 0;
    for (int s = 0; s < 1000; ++s) {
        SusResponse r;
        for (auto& x : r.items) x = v(g);
        const std::size_t i = std::size_t(item(g));
        if (r.items[i] == 5) r.items[i] = 4;
        SusResponse up = r;
        ++up.items[i];
        const double d = sus_score(up) - sus_score(r);
        violations += i % 2 == 0 ? d < 0 : d > 0;
    }
    return {a == 100 && b == 50 && c == 87.5 && c_printed == 85 && violations == 0,
            fmt("100 -> %.1f, 50 -> %.1f, 87.5 -> %.1f (printed item list scores %.1f); monotonicity violations %d/1000",
                a, b, c, c_printed, violations)};
}

Outcome flat_curves() {
    const std::vector<double> levels{264, 195, 127, 65, 18};
    const int sims = 1000;
    std::vector<char> flagged(sims, 0);
    parallel_for(sims, jobs(), [&](std::size_t i) {
        std::mt19937_64 g(derive_seed(9, "acceptance/flat", i));
        std::uniform_real_distribution<double> u(0, 1);
        FitDataset d;
        for (double x : levels)
            for (int k = 0; k < 20; ++k) d.trials.push_back({x, u(g) < 0.5});
        try {
            flagged[i] = detect_flat_curve(fit_probit(d), d);
        } catch (const ConvergenceError&) {
            flagged[i] = 1;
        }
    });
    const auto& prep = calibrated();
    std::vector<char> false_pos(sims, 0);
    parallel_for(sims, jobs(), [&](std::size_t i) {
        const auto d = dataset_from_records(run_subject(prep, 1, derive_seed(9, "acceptance/calibrated", i)).records);
        false_pos[i] = detect_flat_curve(fit_probit(d), d);
    });
    const int power = int(std::count(flagged.begin(), flagged.end(), 1));
    const int fp = int(std::count(false_pos.begin(), false_pos.end(), 1));
    return {power >= 900 && fp <= 50, fmt("beta1 = 0 flagged %d/1000; calibrated observer flagged %d/1000", power, fp)};
}

Outcome determinism() {
    const auto dir = fs::temp_directory_path() / "vibes_acceptance_demo";
    fs::remove_all(dir);
    DemoArgs a;
    a.jobs = jobs();
    a.out_dir = dir / "first";
    cmd_pipeline_demo(Config{}, a);
    a.out_dir = dir / "second";
    cmd_pipeline_demo(Config{}, a);
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const auto r1 = slurp(dir / "first" / "report.json"), r2 = slurp(dir / "second" / "report.json");
    return {!r1.empty() && r1 == r2, fmt("two demo runs (12 subjects, 2000 resamples): %zu-byte reports %s", r1.size(),
                                         r1 == r2 ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"closed-loop JND/PSE recovery", closed_loop},
        {"JND/PSE formula exactness", formulas},
        {"fit vs grid-search oracle", grid_oracle},
        {"pipeline filter physics and streaming", pipeline_physics},
        {"experiment plan conformance", plans},
        {"pairwise success table shape", pairwise},
        {"identification ordering", identification},
        {"SUS scoring", sus},
        {"flat-curve detection", flat_curves},
        {"demo determinism", determinism},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += !o.pass;
        std::printf("[%s] %2zu %s: %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
    return failures;
}
