#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vibes {

/// One forced-choice response: stimulus x (grit, µm), y = "comparison judged rougher".
struct Observation {
    double x = 0.0;
    bool y = false;
    int subject = 0;
};

struct FitDataset {
    std::vector<Observation> trials;

    std::size_t size() const noexcept { return trials.size(); }
    /// Distinct subject ids in first-seen order.
    std::vector<int> subjects() const;
};

/// Trials sharing one stimulus value (and subject, for the mixed model).
struct BinomialGroup {
    double x = 0.0;
    double n = 0.0;
    double k = 0.0;  // number of y = 1
    int subject = 0;
};

/// Groups by (subject, x) when by_subject, else by x alone. Sorted by (subject, x).
std::vector<BinomialGroup> group_trials(const FitDataset& data, bool by_subject = false);

using Interval = std::pair<double, double>;

struct PsychometricFit {
    double beta0 = 0.0;
    double beta1 = 0.0;
    double jnd_um = 0.0;  // NaN when beta1 <= 0
    double pse_um = 0.0;  // NaN when beta1 <= 0
    std::optional<Interval> ci_jnd;
    std::optional<Interval> ci_pse;
    double log_likelihood = 0.0;
    bool converged = false;
    std::size_t n_trials = 0;
    int iterations = 0;
    /// Covariance of (beta0, beta1) from the observed information, row-major.
    std::array<double, 4> cov{};
    /// Random-intercept SD in probit units; set only by the mixed model.
    std::optional<double> sigma_subject;
    std::string method = "probit";
    std::string diagnostic;
};

struct FitOptions {
    int max_iterations = 100;
    double tolerance = 1e-10;  // log-likelihood improvement
};

double probit_log_likelihood(std::span<const BinomialGroup> groups, double beta0, double beta1);
std::array<double, 2> probit_gradient(std::span<const BinomialGroup> groups, double beta0, double beta1);
/// Hessian of the log-likelihood, row-major 2x2.
std::array<double, 4> probit_hessian(std::span<const BinomialGroup> groups, double beta0, double beta1);

/// Maximum-likelihood probit regression by safeguarded Newton-Raphson.
/// Throws ParameterError when all x are equal, ConvergenceError when only one response class is present.
/// Complete separation returns a fit with converged = false and a diagnostic.
PsychometricFit fit_probit(const FitDataset& data, const FitOptions& opts = {});
PsychometricFit fit_probit(std::span<const BinomialGroup> groups, const FitOptions& opts = {});

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Physicists' Gauss-Hermite rule (weight e^{-t²}) via Golub-Welsch.
QuadratureRule gauss_hermite(int n);

struct GlmmOptions {
    int quadrature_nodes = 20;
    int max_iterations = 100;
    double tolerance = 1e-10;
};

/// Marginal log-likelihood of the random-intercept probit model (adaptive Gauss-Hermite).
double glmm_log_likelihood(const FitDataset& data, double beta0, double beta1, double sigma, int nodes = 20);

/// Probit GLMM with a Gaussian random intercept per subject. A single subject reduces to fit_probit
/// with sigma_subject = 0.
PsychometricFit fit_probit_random_intercept(const FitDataset& data, const GlmmOptions& opts = {});

/// JND = 1/beta1 and PSE = -beta0/beta1. Throw ConvergenceError when beta1 <= 0.
double jnd(double beta1);
double pse(double beta0, double beta1);
double jnd(const PsychometricFit& fit);
double pse(const PsychometricFit& fit);

double predict_p(const PsychometricFit& fit, double x);

enum class Statistic { jnd, pse };

struct BootstrapOptions {
    int n_resamples = 2000;
    std::uint64_t seed = 1;
    int jobs = 1;
    double max_failed_fraction = 0.2;
    bool random_intercept = false;
};

struct BootstrapResult {
    Interval ci_jnd;
    Interval ci_pse;
    int n_resamples = 0;
    int n_failed = 0;  // redrawn resamples
    std::vector<double> jnd_samples;  // sorted
    std::vector<double> pse_samples;  // sorted
};

/// Case resampling stratified by stimulus level (and subject, for the mixed model), percentile 95%
/// intervals. Failed resamples are redrawn; more than max_failed_fraction failures throws ConvergenceError.
BootstrapResult bootstrap(const FitDataset& data, const BootstrapOptions& opts = {});
Interval bootstrap_ci(const FitDataset& data, Statistic statistic, int n_resamples = 2000, std::uint64_t seed = 1);

/// Linear-interpolated quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q);

struct FlatCurveOptions {
    double alpha = 0.05;
    double stimulus_range_um = 246.0;
};

/// True when beta1 is not significantly positive (one-sided Wald test) or the JND exceeds the stimulus range.
bool detect_flat_curve(const PsychometricFit& fit, const FitDataset& data, const FlatCurveOptions& opts = {});

}  // namespace vibes
