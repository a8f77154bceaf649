#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "vibes/errors.hpp"
#include "vibes/normal.hpp"
#include "vibes/statfit.hpp"

using namespace vibes;

namespace {

const double kB0 = -1.7406, kB1 = 0.011455;
const std::vector<double> kLevels{264, 195, 127, 65, 18};

FitDataset simulate(double b0, double b1, int per_level, std::uint64_t seed, int subject = 0, double offset = 0.0) {
    std::mt19937_64 g(seed);
    std::uniform_real_distribution<double> u(0, 1);
    FitDataset d;
    for (double x : kLevels)
        for (int i = 0; i < per_level; ++i) d.trials.push_back({x, u(g) < oracle::phi(b0 + offset + b1 * x), subject});
    return d;
}

FitDataset simulate_subjects(int n, double sd, std::uint64_t seed, int per_level = 20) {
    std::mt19937_64 g(seed);
    std::normal_distribution<double> z(0, sd);
    FitDataset all;
    for (int s = 1; s <= n; ++s) {
        const double off = sd > 0 ? z(g) : 0.0;
        const auto d = simulate(kB0, kB1, per_level, seed * 1000 + s, s, off);
        all.trials.insert(all.trials.end(), d.trials.begin(), d.trials.end());
    }
    return all;
}

std::vector<std::pair<double, int>> pairs(const FitDataset& d) {
    std::vector<std::pair<double, int>> out;
    for (const auto& o : d.trials) out.push_back({o.x, o.y ? 1 : 0});
    return out;
}

}  // namespace

TEST_CASE("normal CDF helpers") {
    for (double z = -8; z <= 8; z += 0.37) {
        CHECK(std::abs(norm_cdf(z) - oracle::phi(z)) < 1e-15);
        if (z < 3) CHECK(norm_quantile(norm_cdf(z)) == doctest::Approx(z).epsilon(1e-9));
        CHECK(inv_mills(z) == doctest::Approx(norm_pdf(z) / norm_cdf(z)).epsilon(1e-9));
    }
    CHECK(log_norm_cdf(-40) == doctest::Approx(-804.608442013754).epsilon(1e-9));
    CHECK(inv_mills(-40) == doctest::Approx(40.0249688).epsilon(1e-6));
    CHECK(norm_quantile(0.95) == doctest::Approx(1.6448536269514722).epsilon(1e-12));
    CHECK_THROWS(norm_quantile(0.0));
}

TEST_CASE("JND and PSE formulas") {
    CHECK(jnd(0.011455) == doctest::Approx(87.30).epsilon(1e-4));
    CHECK(pse(-1.7406, 0.011455) == doctest::Approx(151.96).epsilon(1e-4));
    CHECK(pse(0.0, 0.3) == 0.0);
    CHECK_THROWS_AS(jnd(0.0), ConvergenceError);
    CHECK_THROWS_AS(pse(1.0, -0.1), ConvergenceError);
}

TEST_CASE("predict_p") {
    PsychometricFit f;
    f.beta0 = kB0;
    f.beta1 = kB1;
    CHECK(predict_p(f, 127) == doctest::Approx(0.3875).epsilon(5e-4));
    CHECK(predict_p(f, 127) == doctest::Approx(oracle::phi(kB0 + kB1 * 127)).epsilon(1e-12));
    CHECK(predict_p(f, -kB0 / kB1) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(predict_p(f, 1e6) == 1.0);
    double prev = 0;
    for (double x = 0; x < 400; x += 5) {
        CHECK(predict_p(f, x) > prev);
        prev = predict_p(f, x);
    }
}

TEST_CASE("parametric recovery on a large dataset") {
    const auto d = simulate(kB0, kB1, 20000, 1);
    const auto f = fit_probit(d);
    CHECK(f.converged);
    CHECK(f.n_trials == 100000);
    CHECK(f.beta0 == doctest::Approx(kB0).epsilon(0.03));
    CHECK(f.beta1 == doctest::Approx(kB1).epsilon(0.03));
    CHECK(f.jnd_um == doctest::Approx(1 / f.beta1));
    CHECK(f.pse_um == doctest::Approx(-f.beta0 / f.beta1));
}

TEST_CASE("fit agrees with the grid-search oracle") {
    for (std::uint64_t s = 1; s <= 3; ++s) {
        const auto d = simulate(kB0, kB1, 10, 100 + s);
        const auto f = fit_probit(d);
        REQUIRE(f.converged);
        const auto [g0, g1] = oracle::grid_search_ml(pairs(d), 1e-6);
        CHECK(std::abs(f.beta0 - g0) < 2e-4);
        CHECK(std::abs(f.beta1 - g1) < 2e-4);
    }
}

TEST_CASE("score vanishes at the estimate and the gradient matches finite differences") {
    const auto d = simulate(kB0, kB1, 20, 7);
    const auto groups = group_trials(d);
    const auto f = fit_probit(groups);
    const auto g = probit_gradient(groups, f.beta0, f.beta1);
    CHECK(std::hypot(g[0], g[1]) < 1e-8);

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u0(-4, 2), u1(-0.01, 0.04);
    int ok = 0;
    for (int i = 0; i < 100; ++i) {
        const double b0 = u0(rng), b1 = u1(rng);
        const auto an = probit_gradient(groups, b0, b1);
        const double h0 = 1e-6, h1 = 1e-8;
        const double n0 = (probit_log_likelihood(groups, b0 + h0, b1) - probit_log_likelihood(groups, b0 - h0, b1)) / (2 * h0);
        const double n1 = (probit_log_likelihood(groups, b0, b1 + h1) - probit_log_likelihood(groups, b0, b1 - h1)) / (2 * h1);
        ok += std::abs(an[0] - n0) <= 1e-6 * std::max(1.0, std::abs(n0)) &&
              std::abs(an[1] - n1) <= 1e-6 * std::max(1.0, std::abs(n1));
        CHECK(probit_log_likelihood(groups, b0, b1) == doctest::Approx(oracle::probit_ll(pairs(d), b0, b1)).epsilon(1e-10));
    }
    CHECK(ok == 100);

    const auto h = probit_hessian(groups, f.beta0, f.beta1);
    const double e = 1e-6;
    const auto gp = probit_gradient(groups, f.beta0 + e, f.beta1), gm = probit_gradient(groups, f.beta0 - e, f.beta1);
    CHECK(h[0] == doctest::Approx((gp[0] - gm[0]) / (2 * e)).epsilon(1e-5));
    CHECK(h[2] == doctest::Approx((gp[1] - gm[1]) / (2 * e)).epsilon(1e-5));
}

TEST_CASE("rescaling x rescales the fit") {
    const auto d = simulate(kB0, kB1, 20, 9);
    const auto f = fit_probit(d);
    for (double c : {0.001, 2.5, 1000.0}) {
        FitDataset s = d;
        for (auto& o : s.trials) o.x *= c;
        const auto fs = fit_probit(s);
        CHECK(fs.beta1 == doctest::Approx(f.beta1 / c).epsilon(1e-6));
        CHECK(fs.beta0 == doctest::Approx(f.beta0).epsilon(1e-6));
        CHECK(fs.jnd_um == doctest::Approx(c * f.jnd_um).epsilon(1e-6));
        CHECK(fs.pse_um == doctest::Approx(c * f.pse_um).epsilon(1e-6));
    }
}

TEST_CASE("flipping labels negates both coefficients") {
    const auto d = simulate(kB0, kB1, 20, 10);
    FitDataset flipped = d;
    for (auto& o : flipped.trials) o.y = !o.y;
    const auto a = fit_probit(d), b = fit_probit(flipped);
    CHECK(b.beta0 == doctest::Approx(-a.beta0).epsilon(1e-8));
    CHECK(b.beta1 == doctest::Approx(-a.beta1).epsilon(1e-8));
    CHECK(std::isnan(b.jnd_um));
}

TEST_CASE("degenerate inputs") {
    FitDataset ones;
    for (double x : kLevels)
        for (int i = 0; i < 4; ++i) ones.trials.push_back({x, true});
    CHECK_THROWS_AS(fit_probit(ones), ConvergenceError);

    FitDataset same_x;
    for (int i = 0; i < 20; ++i) same_x.trials.push_back({127, i % 2 == 0});
    CHECK_THROWS_AS(fit_probit(same_x), ParameterError);

    FitDataset separated;
    for (double x : kLevels)
        for (int i = 0; i < 4; ++i) separated.trials.push_back({x, x > 127});
    const auto f = fit_probit(separated);
    CHECK_FALSE(f.converged);
    CHECK_FALSE(f.diagnostic.empty());
}

TEST_CASE("Gauss-Hermite rule integrates polynomials exactly") {
    const auto q = gauss_hermite(20);
    REQUIRE(q.nodes.size() == 20);
    double w = 0, m2 = 0, m4 = 0;
    for (std::size_t i = 0; i < 20; ++i) {
        w += q.weights[i];
        m2 += q.weights[i] * q.nodes[i] * q.nodes[i];
        m4 += q.weights[i] * std::pow(q.nodes[i], 4);
    }
    const double sp = std::sqrt(std::numbers::pi);
    CHECK(w == doctest::Approx(sp).epsilon(1e-12));
    CHECK(m2 == doctest::Approx(sp / 2).epsilon(1e-12));
    CHECK(m4 == doctest::Approx(3 * sp / 4).epsilon(1e-12));
}

TEST_CASE("GLMM likelihood matches brute-force integration and the fit maximizes it") {
    const auto d = simulate_subjects(6, 0.4, 21, 6);
    std::vector<std::tuple<int, double, int>> triples;
    for (const auto& o : d.trials) triples.emplace_back(o.subject, o.x, o.y ? 1 : 0);
    for (double sigma : {0.0, 0.2, 0.7, 1.5})
        CHECK(glmm_log_likelihood(d, kB0, kB1, sigma) ==
              doctest::Approx(oracle::glmm_ll(triples, kB0, kB1, sigma)).epsilon(1e-8));

    const auto m = fit_probit_random_intercept(d);
    REQUIRE(m.converged);
    const double best = oracle::glmm_ll(triples, m.beta0, m.beta1, *m.sigma_subject);
    CHECK(m.log_likelihood == doctest::Approx(best).epsilon(1e-8));
    for (int k = 0; k < 3; ++k)
        for (double e : {-1.0, 1.0}) {
            double b0 = m.beta0, b1 = m.beta1, sg = *m.sigma_subject;
            (k == 0 ? b0 : k == 1 ? b1 : sg) += e * (k == 1 ? 1e-5 : 1e-3);
            CHECK(oracle::glmm_ll(triples, b0, b1, std::abs(sg)) <= best + 1e-9);
        }
}

// Twelve subjects make variance-component estimates noisy, so the per-dataset targets are checked as
// Monte-Carlo rates.
TEST_CASE("random intercept with no heterogeneity") {
    int small = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        const auto d = simulate_subjects(12, 0.0, s);
        const auto mixed = fit_probit_random_intercept(d);
        CHECK(mixed.converged);
        REQUIRE(mixed.sigma_subject);
        CHECK(*mixed.sigma_subject >= 0.0);
        CHECK(mixed.method == "probit-glmm-random-intercept");
        if (*mixed.sigma_subject < 0.05) {
            ++small;
            const auto fixed = fit_probit(d);
            CHECK(mixed.beta0 == doctest::Approx(fixed.beta0).epsilon(0.01));
            CHECK(mixed.beta1 == doctest::Approx(fixed.beta1).epsilon(0.01));
        }
    }
    CHECK(small >= 7);
}

TEST_CASE("random intercept SD is recovered") {
    double mean = 0.0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
        const auto d = simulate_subjects(12, 0.3, 40 + s);
        const auto m = fit_probit_random_intercept(d);
        CHECK(m.converged);
        mean += *m.sigma_subject / 10;
        CHECK(std::abs(glmm_log_likelihood(d, m.beta0, m.beta1, *m.sigma_subject, 20) -
                       glmm_log_likelihood(d, m.beta0, m.beta1, *m.sigma_subject, 40)) < 1e-6);
    }
    CHECK(std::abs(mean - 0.3) <= 0.3 * 0.3);
}

TEST_CASE("GLMM likelihood reduces to the probit likelihood at sigma 0") {
    const auto d = simulate_subjects(4, 0.0, 8);
    CHECK(glmm_log_likelihood(d, kB0, kB1, 0.0) ==
          doctest::Approx(probit_log_likelihood(group_trials(d), kB0, kB1)).epsilon(1e-10));
}

TEST_CASE("single subject degrades to fit_probit") {
    const auto d = simulate(kB0, kB1, 20, 4, 1);
    const auto m = fit_probit_random_intercept(d);
    REQUIRE(m.sigma_subject);
    CHECK(*m.sigma_subject == 0.0);
    CHECK(m.beta1 == doctest::Approx(fit_probit(d).beta1).epsilon(1e-12));
}

TEST_CASE("bootstrap is deterministic and brackets the estimate") {
    const auto d = simulate(kB0, kB1, 20, 12);
    const auto a = bootstrap_ci(d, Statistic::jnd, 2000, 3);
    const auto b = bootstrap_ci(d, Statistic::jnd, 2000, 3);
    CHECK(a == b);
    BootstrapOptions o;
    o.n_resamples = 2000;
    o.seed = 3;
    o.jobs = 3;
    const auto par = bootstrap(d, o);
    CHECK(par.ci_jnd == a);
    CHECK(std::is_sorted(par.jnd_samples.begin(), par.jnd_samples.end()));
    CHECK(par.jnd_samples.size() == 2000);

    int contains = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto ds = simulate(kB0, kB1, 20, 500 + s);
        const auto f = fit_probit(ds);
        BootstrapOptions bo;
        bo.n_resamples = 400;
        bo.seed = s;
        const auto r = bootstrap(ds, bo);
        contains += r.ci_jnd.first <= f.jnd_um && f.jnd_um <= r.ci_jnd.second && r.ci_pse.first <= f.pse_um &&
                    f.pse_um <= r.ci_pse.second;
    }
    CHECK(contains >= 90);
}

TEST_CASE("stratified resamples keep the per-level counts") {
    const auto d = simulate(kB0, kB1, 20, 13);
    BootstrapOptions o;
    o.n_resamples = 50;
    CHECK(bootstrap(d, o).n_resamples == 50);
    FitDataset tiny;
    for (double x : kLevels) tiny.trials.push_back({x, x > 127});
    tiny.trials.push_back({127, true});
    CHECK_THROWS_AS(bootstrap(tiny, o), ConvergenceError);
}

TEST_CASE("type-7 quantiles") {
    const std::vector<double> v{1, 2, 3, 4};
    CHECK(quantile_sorted(v, 0.0) == 1.0);
    CHECK(quantile_sorted(v, 1.0) == 4.0);
    CHECK(quantile_sorted(v, 0.5) == 2.5);
    CHECK(quantile_sorted(v, 0.25) == doctest::Approx(1.75));
}

TEST_CASE("flat curve detection") {
    PsychometricFit inverted;
    inverted.beta0 = 1;
    inverted.beta1 = -0.01;
    inverted.converged = true;
    const auto d = simulate(kB0, kB1, 20, 14);
    CHECK(detect_flat_curve(inverted, d));

    int flagged = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto flat = simulate(0.0, 0.0, 20, 900 + s);
        try {
            flagged += detect_flat_curve(fit_probit(flat), flat);
        } catch (const ConvergenceError&) {
            ++flagged;
        }
    }
    CHECK(flagged >= 90);

    int false_pos = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
        const auto ds = simulate(kB0, kB1, 20, 1900 + s);
        false_pos += detect_flat_curve(fit_probit(ds), ds);
    }
    CHECK(false_pos <= 5);
}

TEST_CASE("grouping") {
    FitDataset d;
    d.trials = {{10, true, 2}, {5, false, 1}, {10, false, 2}, {5, true, 2}};
    const auto g = group_trials(d);
    REQUIRE(g.size() == 2);
    CHECK(g[0].x == 5);
    CHECK(g[0].n == 2);
    CHECK(g[1].k == 1);
    CHECK(group_trials(d, true).size() == 3);
    CHECK(d.subjects() == std::vector<int>{2, 1});
}
