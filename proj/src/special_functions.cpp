#include "transim/special_functions.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace transim {

namespace {

constexpr int kMaxIterations = 10000;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// x^a e^-x / Gamma(a)
double gamma_prefactor(double a, double x) {
    return std::exp(a * std::log(x) - x - log_gamma(a));
}

double lower_series(double a, double x) {
    double ap = a;
    double term = 1.0 / a;
    double sum = term;
    for (int n = 0; n < kMaxIterations; ++n) {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if (std::abs(term) < std::abs(sum) * kEps) break;
    }
    return sum * gamma_prefactor(a, x);
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
double upper_continued_fraction(double a, double x) {
    double b = x + 1.0 - a;
    double c = 1.0 / kTiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i < kMaxIterations; ++i) {
        const double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::abs(d) < kTiny) d = kTiny;
        c = b + an / c;
        if (std::abs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double delta = d * c;
        h *= delta;
        if (std::abs(delta - 1.0) < kEps) break;
    }
    return gamma_prefactor(a, x) * h;
}

void check_gamma_domain(double a, double x) {
    if (!(a > 0.0) || !(x >= 0.0)) {
        throw std::domain_error("incomplete gamma requires a > 0 and x >= 0");
    }
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double log_gamma(double x) {
    if (!(x > 0.0)) throw std::domain_error("log_gamma requires x > 0");
    if (x < 0.5) return log_gamma(x + 1.0) - std::log(x);
    static constexpr double kCoefficients[] = {
        0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
        771.32342877765313,   -176.61502916214059,   12.507343278686905,
        -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7,
    };
    const double z = x - 1.0;
    double series = kCoefficients[0];
    for (int i = 1; i < 9; ++i) series += kCoefficients[i] / (z + i);
    const double t = z + 7.5;
    return 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

double gamma_p(double a, double x) {
    check_gamma_domain(a, x);
    if (x == 0.0) return 0.0;
    if (x < a + 1.0) return lower_series(a, x);
    return 1.0 - upper_continued_fraction(a, x);
}

double gamma_q(double a, double x) {
    check_gamma_domain(a, x);
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - lower_series(a, x);
    return upper_continued_fraction(a, x);
}

double chi_square_sf(double x, double df) {
    if (!(df >= 1.0)) throw std::domain_error("chi_square_sf requires df >= 1");
    if (std::isnan(x)) throw std::domain_error("chi_square_sf of NaN");
    if (x <= 0.0) return 1.0;
    if (std::isinf(x)) return 0.0;
    return gamma_q(0.5 * df, 0.5 * x);
}

double log_choose(std::int64_t n, std::int64_t k) {
    if (k < 0 || n < 0 || k > n) {
        throw std::domain_error("log_choose requires 0 <= k <= n, got n=" + std::to_string(n) +
                                " k=" + std::to_string(k));
    }
    if (k == 0 || k == n) return 0.0;
    const double nn = static_cast<double>(n);
    const double kk = static_cast<double>(k);
    return log_gamma(nn + 1.0) - log_gamma(kk + 1.0) - log_gamma(nn - kk + 1.0);
}

}  // namespace transim
