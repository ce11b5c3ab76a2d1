#pragma once

#include <cstdint>

namespace transim {

/// Standard normal CDF, accurate to ~1e-16 absolute (complementary error function).
double normal_cdf(double x);

/// ln Gamma(x) for x > 0 (Lanczos approximation, g = 7).
double log_gamma(double x);

/// Regularized lower incomplete gamma P(a, x), a > 0, x >= 0.
double gamma_p(double a, double x);

/// Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x), computed
/// directly (continued fraction) in the upper tail so small values keep
/// full relative precision.
double gamma_q(double a, double x);

/// Upper tail probability of the chi-square distribution with `df` degrees of freedom.
double chi_square_sf(double x, double df);

/// ln C(n, k) for 0 <= k <= n.
double log_choose(std::int64_t n, std::int64_t k);

}  // namespace transim
