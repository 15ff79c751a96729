#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <gmpxx.h>

namespace cpart {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

// log(x (x+1) ... (x+r-1)), the rising factorial.
inline double log_rising(double x, long r) {
    if (x <= 0.0) throw std::invalid_argument("log_rising: x must be positive");
    return std::lgamma(x + static_cast<double>(r)) - std::lgamma(x);
}

// Natural log of an exact integer; exact mantissa/exponent split so the
// result stays accurate far beyond double range.
inline double log_mpz(const mpz_class& v) {
    if (v <= 0) throw std::invalid_argument("log_mpz: nonpositive value");
    signed long exp2 = 0;
    const double mant = mpz_get_d_2exp(&exp2, v.get_mpz_t());
    return std::log(mant) + static_cast<double>(exp2) * M_LN2;
}

inline double log_mpq(const mpq_class& v) {
    if (v <= 0) throw std::invalid_argument("log_mpq: nonpositive value");
    return log_mpz(v.get_num()) - log_mpz(v.get_den());
}

inline double log_sum_exp(std::span<const double> logs) {
    double m = kNegInf;
    for (double x : logs) m = std::max(m, x);
    if (m == kNegInf) return kNegInf;
    if (m == kInf) return kInf;
    long double acc = 0.0L;
    for (double x : logs) acc += std::exp(static_cast<long double>(x - m));
    return m + static_cast<double>(std::log(acc));
}

inline double log_sum_exp(const std::vector<double>& logs) {
    return log_sum_exp(std::span<const double>(logs));
}

// Regularized lower incomplete gamma P(a, x), series/continued-fraction
// per Numerical Recipes.
inline double gamma_p(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double gln = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a;
        double sum = 1.0 / a;
        double del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // continued fraction for Q(a, x)
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-16) break;
    }
    const double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1.0 - q;
}

// Upper tail p-value of a chi-square statistic.
inline double chi_square_sf(double stat, double dof) {
    return 1.0 - gamma_p(dof / 2.0, stat / 2.0);
}

inline double log_norm_cdf(double x) {
    // log Phi(x) via erfc; accurate enough in the left tail for the
    // branch-probability computations that use it.
    if (x > -8.0) return std::log(0.5 * std::erfc(-x * M_SQRT1_2));
    // asymptotic expansion for the deep tail
    const double x2 = x * x;
    return -0.5 * x2 - 0.5 * std::log(2.0 * M_PI) - std::log(-x) + std::log1p(-1.0 / x2);
}

}  // namespace cpart
