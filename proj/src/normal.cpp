#include "vibes/normal.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "vibes/errors.hpp"

namespace vibes {
namespace {

constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;
constexpr double kLogSqrt2Pi = 0.9189385332046727417803297;

// Lower-tail asymptotic series 1 - 1/z² + 3/z⁴ - 15/z⁶ + 105/z⁸, used where erfc underflows.
double tail_series(double z) noexcept {
    const double r = 1.0 / (z * z);
    return 1.0 - r * (1.0 - 3.0 * r * (1.0 - 5.0 * r * (1.0 - 7.0 * r)));
}

}  // namespace

double norm_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double norm_cdf(double z) noexcept { return 0.5 * std::erfc(-z * std::numbers::sqrt2 / 2.0); }

double log_norm_cdf(double z) noexcept {
    if (z > 5.0) return std::log1p(-0.5 * std::erfc(z * std::numbers::sqrt2 / 2.0));
    if (z > -30.0) return std::log(norm_cdf(z));
    return -0.5 * z * z - kLogSqrt2Pi - std::log(-z) + std::log(tail_series(z));
}

double inv_mills(double z) noexcept {
    if (z > -30.0) return norm_pdf(z) / norm_cdf(z);
    return -z / tail_series(z);
}

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ParameterError("norm_quantile requires 0 < p < 1");
    // Acklam's rational approximation, refined by one Halley step.
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double e = norm_cdf(x) - p;
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

}  // namespace vibes
