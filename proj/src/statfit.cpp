#include "vibes/statfit.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <random>

#include "vibes/errors.hpp"
#include "vibes/normal.hpp"
#include "vibes/parallel.hpp"
#include "vibes/rng.hpp"

namespace vibes {

std::vector<int> FitDataset::subjects() const {
    std::vector<int> ids;
    for (const auto& t : trials)
        if (std::find(ids.begin(), ids.end(), t.subject) == ids.end()) ids.push_back(t.subject);
    return ids;
}

std::vector<BinomialGroup> group_trials(const FitDataset& data, bool by_subject) {
    std::map<std::pair<int, double>, BinomialGroup> acc;
    for (const auto& t : data.trials) {
        const int sid = by_subject ? t.subject : 0;
        auto& g = acc[{sid, t.x}];
        g.x = t.x;
        g.subject = sid;
        g.n += 1.0;
        if (t.y) g.k += 1.0;
    }
    std::vector<BinomialGroup> out;
    out.reserve(acc.size());
    for (auto& [key, g] : acc) out.push_back(g);
    return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;

struct EtaTerms {
    double ll = 0.0;
    double d1 = 0.0;  // d ll / d eta
    double d2 = 0.0;  // d² ll / d eta²
};

EtaTerms eta_terms(double eta, double n, double k) {
    EtaTerms t;
    const double m = n - k;
    if (k > 0.0) {
        const double lp = inv_mills(eta);
        t.ll += k * log_norm_cdf(eta);
        t.d1 += k * lp;
        t.d2 -= k * lp * (eta + lp);
    }
    if (m > 0.0) {
        const double lm = inv_mills(-eta);
        t.ll += m * log_norm_cdf(-eta);
        t.d1 -= m * lm;
        t.d2 -= m * lm * (-eta + lm);
    }
    return t;
}

struct Scaling {
    double center = 0.0;
    double scale = 1.0;
};

Scaling scaling_for(std::span<const BinomialGroup> groups) {
    double n = 0.0, sx = 0.0;
    for (const auto& g : groups) {
        n += g.n;
        sx += g.n * g.x;
    }
    Scaling s;
    s.center = sx / n;
    double ss = 0.0;
    for (const auto& g : groups) ss += g.n * (g.x - s.center) * (g.x - s.center);
    s.scale = std::sqrt(ss / n);
    return s;
}

std::vector<BinomialGroup> standardized(std::span<const BinomialGroup> groups, const Scaling& s) {
    std::vector<BinomialGroup> out(groups.begin(), groups.end());
    for (auto& g : out) g.x = (g.x - s.center) / s.scale;
    return out;
}

// (a0, a1) on standardized x back to (beta0, beta1) on the original scale.
std::pair<double, double> unscale(double a0, double a1, const Scaling& s) {
    return {a0 - a1 * s.center / s.scale, a1 / s.scale};
}

void check_fit_input(std::span<const BinomialGroup> groups) {
    if (groups.empty()) throw ParameterError("no trials to fit");
    const auto [lo, hi] = std::minmax_element(groups.begin(), groups.end(),
                                              [](const auto& a, const auto& b) { return a.x < b.x; });
    if (lo->x == hi->x) throw ParameterError("all stimulus values are equal; slope is not identifiable");
    double n = 0.0, k = 0.0;
    for (const auto& g : groups) {
        n += g.n;
        k += g.k;
    }
    if (k == 0.0 || k == n) throw ConvergenceError("complete separation: every response is " + std::string(k == 0.0 ? "0" : "1"));
}

// Complete or quasi-complete separation along x leaves the ML estimate at infinity.
bool separated(std::span<const BinomialGroup> groups) {
    double max0 = -std::numeric_limits<double>::infinity(), min0 = std::numeric_limits<double>::infinity();
    double max1 = max0, min1 = min0;
    for (const auto& g : groups) {
        if (g.n - g.k > 0.0) {
            max0 = std::max(max0, g.x);
            min0 = std::min(min0, g.x);
        }
        if (g.k > 0.0) {
            max1 = std::max(max1, g.x);
            min1 = std::min(min1, g.x);
        }
    }
    return max0 <= min1 || max1 <= min0;
}

// Ordinary least squares on empirical probits pooled per stimulus value; 0 and n are moved in by 0.5/n.
std::pair<double, double> empirical_probit_start(std::span<const BinomialGroup> groups) {
    std::map<double, std::pair<double, double>> pooled;
    for (const auto& g : groups) {
        pooled[g.x].first += g.n;
        pooled[g.x].second += g.k;
    }
    double m = 0.0, sx = 0.0, sz = 0.0, sxx = 0.0, sxz = 0.0;
    for (const auto& [x, nk] : pooled) {
        const double n = nk.first;
        const double p = std::clamp(nk.second / n, 0.5 / n, 1.0 - 0.5 / n);
        const double z = norm_quantile(p);
        m += 1.0;
        sx += x;
        sz += z;
        sxx += x * x;
        sxz += x * z;
    }
    const double den = m * sxx - sx * sx;
    if (!(std::abs(den) > 0.0)) return {0.0, 0.0};
    const double a1 = (m * sxz - sx * sz) / den;
    return {(sz - a1 * sx) / m, a1};
}

struct NewtonResult {
    double a0 = 0.0, a1 = 0.0;
    double ll = 0.0;
    int iterations = 0;
    bool converged = false;
};

NewtonResult newton_probit(std::span<const BinomialGroup> groups, double a0, double a1, const FitOptions& opts) {
    NewtonResult r{a0, a1, probit_log_likelihood(groups, a0, a1)};
    for (int it = 1; it <= opts.max_iterations; ++it) {
        r.iterations = it;
        const auto g = probit_gradient(groups, r.a0, r.a1);
        auto h = probit_hessian(groups, r.a0, r.a1);
        // Levenberg shift keeps the step an ascent direction if the Hessian degenerates.
        double mu = 0.0;
        double det = h[0] * h[3] - h[1] * h[2];
        while (!(h[0] - mu < 0.0 && (h[0] - mu) * (h[3] - mu) - h[1] * h[2] > 0.0)) {
            mu = mu == 0.0 ? 1e-8 * (1.0 + std::abs(h[0]) + std::abs(h[3])) : mu * 10.0;
            if (!std::isfinite(mu)) break;
        }
        const double h00 = h[0] - mu, h11 = h[3] - mu, h01 = h[1];
        det = h00 * h11 - h01 * h01;
        const double d0 = -(h11 * g[0] - h01 * g[1]) / det;
        const double d1 = -(-h01 * g[0] + h00 * g[1]) / det;

        double t = 1.0;
        double ll_new = r.ll;
        double b0 = r.a0, b1 = r.a1;
        for (int halving = 0; halving < 60; ++halving) {
            b0 = r.a0 + t * d0;
            b1 = r.a1 + t * d1;
            ll_new = probit_log_likelihood(groups, b0, b1);
            if (std::isfinite(ll_new) && ll_new >= r.ll - 1e-13 * std::abs(r.ll)) break;
            t *= 0.5;
        }
        const double improvement = ll_new - r.ll;
        if (ll_new >= r.ll) {
            r.a0 = b0;
            r.a1 = b1;
            r.ll = ll_new;
        }
        if (std::abs(improvement) < opts.tolerance) {
            r.converged = true;
            break;
        }
    }
    return r;
}

std::array<double, 4> covariance_from_hessian(const std::array<double, 4>& h) {
    const double det = h[0] * h[3] - h[1] * h[2];
    if (!(det > 0.0)) return {kNaN, kNaN, kNaN, kNaN};
    return {-h[3] / det, h[1] / det, h[2] / det, -h[0] / det};
}

void fill_derived(PsychometricFit& fit) {
    if (fit.beta1 > 0.0) {
        fit.jnd_um = 1.0 / fit.beta1;
        fit.pse_um = -fit.beta0 / fit.beta1;
    } else {
        fit.jnd_um = kNaN;
        fit.pse_um = kNaN;
    }
}

}  // namespace

double probit_log_likelihood(std::span<const BinomialGroup> groups, double beta0, double beta1) {
    double ll = 0.0;
    for (const auto& g : groups) ll += eta_terms(beta0 + beta1 * g.x, g.n, g.k).ll;
    return ll;
}

std::array<double, 2> probit_gradient(std::span<const BinomialGroup> groups, double beta0, double beta1) {
    std::array<double, 2> grad{};
    for (const auto& g : groups) {
        const double d1 = eta_terms(beta0 + beta1 * g.x, g.n, g.k).d1;
        grad[0] += d1;
        grad[1] += d1 * g.x;
    }
    return grad;
}

std::array<double, 4> probit_hessian(std::span<const BinomialGroup> groups, double beta0, double beta1) {
    std::array<double, 4> h{};
    for (const auto& g : groups) {
        const double d2 = eta_terms(beta0 + beta1 * g.x, g.n, g.k).d2;
        h[0] += d2;
        h[1] += d2 * g.x;
        h[3] += d2 * g.x * g.x;
    }
    h[2] = h[1];
    return h;
}

PsychometricFit fit_probit(std::span<const BinomialGroup> groups, const FitOptions& opts) {
    check_fit_input(groups);
    const Scaling sc = scaling_for(groups);
    const auto ug = standardized(groups, sc);
    const auto [s0, s1] = empirical_probit_start(ug);
    const auto nr = newton_probit(ug, s0, s1, opts);

    PsychometricFit fit;
    std::tie(fit.beta0, fit.beta1) = unscale(nr.a0, nr.a1, sc);
    fit.log_likelihood = probit_log_likelihood(groups, fit.beta0, fit.beta1);
    fit.iterations = nr.iterations;
    fit.converged = nr.converged;
    for (const auto& g : groups) fit.n_trials += static_cast<std::size_t>(g.n);
    fit.cov = covariance_from_hessian(probit_hessian(groups, fit.beta0, fit.beta1));
    if (separated(groups)) {
        fit.converged = false;
        fit.diagnostic = "complete separation: responses are perfectly predicted by x; estimates diverge";
    } else if (!nr.converged) {
        fit.diagnostic = "iteration limit reached";
    }
    fill_derived(fit);
    return fit;
}

PsychometricFit fit_probit(const FitDataset& data, const FitOptions& opts) {
    return fit_probit(group_trials(data, false), opts);
}

QuadratureRule gauss_hermite(int n) {
    if (n < 1) throw ParameterError("Gauss-Hermite rule needs at least one node");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int i = 1; i < n; ++i) {
        jacobi(i, i - 1) = std::sqrt(i / 2.0);
        jacobi(i - 1, i) = jacobi(i, i - 1);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    QuadratureRule rule;
    const double mu0 = std::sqrt(std::numbers::pi);
    for (int i = 0; i < n; ++i) {
        rule.nodes.push_back(eig.eigenvalues()(i));
        const double v = eig.eigenvectors()(0, i);
        rule.weights.push_back(mu0 * v * v);
    }
    return rule;
}

namespace {

// Random-intercept model in the integration variable z ~ N(0,1): eta = a0 + a1*x + sigma*z.
struct Subject {
    std::vector<BinomialGroup> groups;
};

struct SubjectTerms {
    double log_lik = 0.0;
    std::array<double, 3> grad{};
};

// log integrand g(z) without the -log sqrt(2π) constant, and its first two z-derivatives.
void integrand(const Subject& s, double a0, double a1, double sigma, double z, double& g, double& g1, double& g2,
               std::array<double, 3>* score = nullptr) {
    g = -0.5 * z * z;
    double sd1 = 0.0, sd2 = 0.0;
    if (score) score->fill(0.0);
    for (const auto& grp : s.groups) {
        const auto t = eta_terms(a0 + a1 * grp.x + sigma * z, grp.n, grp.k);
        g += t.ll;
        sd1 += t.d1;
        sd2 += t.d2;
        if (score) {
            (*score)[0] += t.d1;
            (*score)[1] += t.d1 * grp.x;
            (*score)[2] += t.d1 * z;
        }
    }
    g1 = sigma * sd1 - z;
    g2 = sigma * sigma * sd2 - 1.0;
}

SubjectTerms subject_terms(const Subject& s, double a0, double a1, double sigma, const QuadratureRule& rule) {
    // Posterior mode of z; the integrand is log-concave so damped Newton converges.
    double z = 0.0, g = 0.0, g1 = 0.0, g2 = 0.0;
    integrand(s, a0, a1, sigma, z, g, g1, g2);
    for (int it = 0; it < 100; ++it) {
        const double step = -g1 / g2;
        double t = 1.0, zn = z, gn = g, g1n = g1, g2n = g2;
        for (int h = 0; h < 40; ++h) {
            zn = z + t * step;
            integrand(s, a0, a1, sigma, zn, gn, g1n, g2n);
            if (gn >= g - 1e-14 * std::abs(g)) break;
            t *= 0.5;
        }
        z = zn;
        g = gn;
        g1 = g1n;
        g2 = g2n;
        if (std::abs(t * step) < 1e-12) break;
    }
    const double tau = 1.0 / std::sqrt(-g2);

    const std::size_t m = rule.nodes.size();
    std::vector<double> logv(m);
    std::vector<std::array<double, 3>> scores(m);
    double vmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
        const double zk = z + std::numbers::sqrt2 * tau * rule.nodes[k];
        double gk, d1, d2;
        integrand(s, a0, a1, sigma, zk, gk, d1, d2, &scores[k]);
        logv[k] = std::log(rule.weights[k]) + gk + rule.nodes[k] * rule.nodes[k];
        vmax = std::max(vmax, logv[k]);
    }
    double sum = 0.0;
    for (double lv : logv) sum += std::exp(lv - vmax);
    SubjectTerms out;
    out.log_lik = std::log(std::numbers::sqrt2 * tau) + vmax + std::log(sum) - kLogSqrt2Pi;
    for (std::size_t k = 0; k < m; ++k) {
        const double p = std::exp(logv[k] - vmax) / sum;
        for (int j = 0; j < 3; ++j) out.grad[j] += p * scores[k][j];
    }
    return out;
}

std::vector<Subject> split_subjects(std::span<const BinomialGroup> groups) {
    std::map<int, Subject> by_id;
    for (const auto& g : groups) by_id[g.subject].groups.push_back(g);
    std::vector<Subject> out;
    for (auto& [id, s] : by_id) out.push_back(std::move(s));
    return out;
}

struct GlmmEval {
    double ll = 0.0;
    Eigen::Vector3d grad = Eigen::Vector3d::Zero();
};

GlmmEval glmm_eval(const std::vector<Subject>& subjects, const Eigen::Vector3d& theta, const QuadratureRule& rule) {
    GlmmEval e;
    for (const auto& s : subjects) {
        const auto t = subject_terms(s, theta[0], theta[1], theta[2], rule);
        e.ll += t.log_lik;
        for (int j = 0; j < 3; ++j) e.grad[j] += t.grad[j];
    }
    return e;
}

PsychometricFit fit_glmm_groups(std::span<const BinomialGroup> groups, const GlmmOptions& opts) {
    check_fit_input(groups);
    std::vector<int> ids;
    for (const auto& g : groups)
        if (std::find(ids.begin(), ids.end(), g.subject) == ids.end()) ids.push_back(g.subject);

    if (ids.size() < 2) {
        auto fit = fit_probit(groups, FitOptions{opts.max_iterations, opts.tolerance});
        fit.sigma_subject = 0.0;
        fit.method = "probit-glmm-random-intercept";
        fit.diagnostic = fit.diagnostic.empty() ? "single subject: random effect not estimable, sigma fixed at 0"
                                                : fit.diagnostic;
        return fit;
    }

    const Scaling sc = scaling_for(groups);
    const auto ug = standardized(groups, sc);
    const auto subjects = split_subjects(ug);
    const auto rule = gauss_hermite(opts.quadrature_nodes);

    // Start from the pooled fixed-effect fit.
    std::vector<BinomialGroup> pooled(ug.begin(), ug.end());
    const auto [s0, s1] = empirical_probit_start(pooled);
    const auto start = newton_probit(pooled, s0, s1, FitOptions{});
    Eigen::Vector3d theta(start.a0, start.a1, 0.3);

    auto cur = glmm_eval(subjects, theta, rule);
    int iterations = 0;
    bool converged = false;
    for (int it = 1; it <= opts.max_iterations; ++it) {
        iterations = it;
        Eigen::Matrix3d hess;
        for (int j = 0; j < 3; ++j) {
            const double h = 1e-5 * std::max(1.0, std::abs(theta[j]));
            Eigen::Vector3d tp = theta, tm = theta;
            tp[j] += h;
            tm[j] -= h;
            hess.col(j) = (glmm_eval(subjects, tp, rule).grad - glmm_eval(subjects, tm, rule).grad) / (2.0 * h);
        }
        hess = 0.5 * (hess + hess.transpose()).eval();

        Eigen::Matrix3d neg = -hess;
        double mu = 0.0;
        Eigen::LLT<Eigen::Matrix3d> llt(neg);
        while (llt.info() != Eigen::Success) {
            mu = mu == 0.0 ? 1e-8 * (1.0 + neg.diagonal().cwiseAbs().maxCoeff()) : mu * 10.0;
            llt.compute(neg + mu * Eigen::Matrix3d::Identity());
        }
        const Eigen::Vector3d step = llt.solve(cur.grad);

        double t = 1.0;
        GlmmEval next = cur;
        Eigen::Vector3d cand = theta;
        for (int halving = 0; halving < 60; ++halving) {
            cand = theta + t * step;
            next = glmm_eval(subjects, cand, rule);
            if (std::isfinite(next.ll) && next.ll >= cur.ll - 1e-13 * std::abs(cur.ll)) break;
            t *= 0.5;
        }
        const double improvement = next.ll - cur.ll;
        if (next.ll >= cur.ll) {
            theta = cand;
            cur = next;
        }
        if (std::abs(improvement) < opts.tolerance) {
            converged = true;
            break;
        }
    }

    PsychometricFit fit;
    fit.method = "probit-glmm-random-intercept";
    std::tie(fit.beta0, fit.beta1) = unscale(theta[0], theta[1], sc);
    // The likelihood is even in sigma; report the non-negative root.
    fit.sigma_subject = std::abs(theta[2]);
    fit.log_likelihood = cur.ll;
    fit.iterations = iterations;
    fit.converged = converged && !separated(groups);
    for (const auto& g : groups) fit.n_trials += static_cast<std::size_t>(g.n);
    fit.cov = covariance_from_hessian(probit_hessian(groups, fit.beta0, fit.beta1));
    if (separated(groups)) fit.diagnostic = "complete separation: estimates diverge";
    else if (!converged) fit.diagnostic = "iteration limit reached";
    fill_derived(fit);
    return fit;
}

}  // namespace

double glmm_log_likelihood(const FitDataset& data, double beta0, double beta1, double sigma, int nodes) {
    const auto groups = group_trials(data, true);
    const auto subjects = split_subjects(groups);
    const auto rule = gauss_hermite(nodes);
    return glmm_eval(subjects, Eigen::Vector3d(beta0, beta1, sigma), rule).ll;
}

PsychometricFit fit_probit_random_intercept(const FitDataset& data, const GlmmOptions& opts) {
    return fit_glmm_groups(group_trials(data, true), opts);
}

double jnd(double beta1) {
    if (!(beta1 > 0.0)) throw ConvergenceError("JND undefined: slope is not positive (flat or inverted curve)");
    return 1.0 / beta1;
}

double pse(double beta0, double beta1) {
    if (!(beta1 > 0.0)) throw ConvergenceError("PSE undefined: slope is not positive (flat or inverted curve)");
    return -beta0 / beta1;
}

double jnd(const PsychometricFit& fit) { return jnd(fit.beta1); }
double pse(const PsychometricFit& fit) { return pse(fit.beta0, fit.beta1); }

double predict_p(const PsychometricFit& fit, double x) { return norm_cdf(fit.beta0 + fit.beta1 * x); }

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw ParameterError("quantile of empty sample");
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

BootstrapResult bootstrap(const FitDataset& data, const BootstrapOptions& opts) {
    if (opts.n_resamples < 1) throw ParameterError("bootstrap needs at least one resample");
    const auto strata = group_trials(data, opts.random_intercept);
    // The original fit must succeed before resampling makes sense.
    {
        const auto base = opts.random_intercept ? fit_glmm_groups(strata, {}) : fit_probit(strata);
        if (!base.converged || !(base.beta1 > 0.0))
            throw ConvergenceError("bootstrap requires a converged fit with positive slope on the original data");
    }

    const auto B = static_cast<std::size_t>(opts.n_resamples);
    const auto max_failures = static_cast<int>(std::floor(opts.max_failed_fraction * static_cast<double>(B)));
    std::vector<double> jnds(B), pses(B);
    std::vector<int> fails(B, 0);

    parallel_for(B, opts.jobs, [&](std::size_t i) {
        const std::uint64_t base_seed = derive_seed(opts.seed, "bootstrap", i);
        for (std::uint64_t attempt = 0;; ++attempt) {
            if (fails[i] > max_failures) throw ConvergenceError("bootstrap: too many failed resamples (unreliable CI)");
            Rng rng(derive_seed(base_seed, "attempt", attempt));
            std::vector<BinomialGroup> resampled = strata;
            for (auto& g : resampled) {
                const auto n = static_cast<std::uint64_t>(g.n);
                const auto ones = static_cast<std::uint64_t>(g.k);
                // Trials in a stratum are ordered ones-first; drawing index j < k picks a y = 1 trial.
                std::uniform_int_distribution<std::uint64_t> pick(0, n - 1);
                double k = 0.0;
                for (std::uint64_t d = 0; d < n; ++d)
                    if (pick(rng) < ones) k += 1.0;
                g.k = k;
            }
            try {
                const auto fit = opts.random_intercept ? fit_glmm_groups(resampled, {}) : fit_probit(resampled);
                if (fit.converged && fit.beta1 > 0.0 && std::isfinite(fit.beta0)) {
                    jnds[i] = 1.0 / fit.beta1;
                    pses[i] = -fit.beta0 / fit.beta1;
                    return;
                }
            } catch (const ConvergenceError&) {
            } catch (const ParameterError&) {
            }
            ++fails[i];
        }
    });

    BootstrapResult res;
    res.n_resamples = opts.n_resamples;
    for (int f : fails) res.n_failed += f;
    if (res.n_failed > max_failures)
        throw ConvergenceError("bootstrap: " + std::to_string(res.n_failed) + " failed resamples exceed " +
                               std::to_string(max_failures) + " (unreliable CI)");
    std::sort(jnds.begin(), jnds.end());
    std::sort(pses.begin(), pses.end());
    res.ci_jnd = {quantile_sorted(jnds, 0.025), quantile_sorted(jnds, 0.975)};
    res.ci_pse = {quantile_sorted(pses, 0.025), quantile_sorted(pses, 0.975)};
    res.jnd_samples = std::move(jnds);
    res.pse_samples = std::move(pses);
    return res;
}

Interval bootstrap_ci(const FitDataset& data, Statistic statistic, int n_resamples, std::uint64_t seed) {
    BootstrapOptions opts;
    opts.n_resamples = n_resamples;
    opts.seed = seed;
    const auto res = bootstrap(data, opts);
    return statistic == Statistic::jnd ? res.ci_jnd : res.ci_pse;
}

bool detect_flat_curve(const PsychometricFit& fit, const FitDataset& data, const FlatCurveOptions& opts) {
    if (!fit.converged || !(fit.beta1 > 0.0) || !std::isfinite(fit.beta1)) return true;
    const auto groups = group_trials(data, false);
    const auto cov = covariance_from_hessian(probit_hessian(groups, fit.beta0, fit.beta1));
    const double se = std::sqrt(cov[3]);
    if (!std::isfinite(se) || !(se > 0.0)) return true;
    if (fit.beta1 / se < norm_quantile(1.0 - opts.alpha)) return true;
    return 1.0 / fit.beta1 > opts.stimulus_range_um;
}

}  // namespace vibes
