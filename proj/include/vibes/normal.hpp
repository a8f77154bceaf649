#pragma once

namespace vibes {

double norm_pdf(double z) noexcept;
/// Standard normal CDF via erfc; absolute error well below 1e-12.
double norm_cdf(double z) noexcept;
/// log Φ(z), accurate in the far lower tail.
double log_norm_cdf(double z) noexcept;
/// φ(z)/Φ(z), the inverse Mills ratio, stable for very negative z.
double inv_mills(double z) noexcept;
/// Φ⁻¹(p) for p in (0, 1).
double norm_quantile(double p);

}  // namespace vibes
