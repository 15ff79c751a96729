#pragma once

#include <cmath>
#include <stdexcept>

#include "cpart/numeric.hpp"
#include "cpart/rng.hpp"

namespace cpart {

namespace pg_detail {

// Proposal split point for J*(1, z); its reciprocal pi/2 is the lower
// truncation of the gamma draw in rtruncgamma, so the two must move together.
inline constexpr double kTrunc = M_2_PI;

// Coefficients of the alternating series for the J*(1, z) density,
// piecewise around the split point.
inline double a_coef(int n, double x) {
    const double np = n + 0.5;
    if (x <= kTrunc) {
        return M_PI * np * std::pow(2.0 / (M_PI * x), 1.5) * std::exp(-2.0 * np * np / x);
    }
    return M_PI * np * std::exp(-0.5 * np * np * M_PI * M_PI * x);
}

// One draw from InverseGaussian(mu, lambda = 1).
inline double rinvgauss(double mu, Rng& rng) {
    const double v = rng.normal();
    const double y = v * v;
    double x = mu + 0.5 * mu * (mu * y - std::sqrt(4.0 * mu * y + mu * mu * y * y));
    if (rng.uniform() > mu / (mu + x)) x = mu * mu / x;
    return x;
}

// Gamma(1/2)-type variable truncated to [pi/2, inf); used to sample the
// reciprocal of a small inverse-Gaussian variate.
inline double rtruncgamma(Rng& rng) {
    for (;;) {
        const double x = 2.0 * rng.exponential() + M_PI_2;
        const double g = std::sqrt(M_PI_2 / x);
        if (rng.uniform() <= g) return x;
    }
}

// InverseGaussian(1/z, 1) truncated to (0, t].
inline double rtigauss(double z, double t, Rng& rng) {
    const double mu = z > 0.0 ? 1.0 / z : kInf;
    if (!(mu <= t)) {
        // reciprocal of a truncated-gamma draw, thinned by the z-tilt
        for (;;) {
            const double x = 1.0 / rtruncgamma(rng);
            if (std::log(rng.uniform_pos()) < -0.5 * z * z * x) return x;
        }
    }
    double x = t + 1.0;
    while (x > t) x = rinvgauss(mu, rng);
    return x;
}

// Probability that the proposal draws from the exponential (right) piece.
inline double mass_texpon(double z) {
    const double t = kTrunc;
    const double fz = M_PI * M_PI * 0.125 + 0.5 * z * z;
    const double b = std::sqrt(1.0 / t) * (t * z - 1.0);
    const double a = -std::sqrt(1.0 / t) * (t * z + 1.0);
    const double x0 = std::log(fz) + fz * t;
    const double xb = x0 - z + log_norm_cdf(b);
    const double xa = x0 + z + log_norm_cdf(a);
    const double qdivp = 4.0 / M_PI * (std::exp(xb) + std::exp(xa));
    return 1.0 / (1.0 + qdivp);
}

}  // namespace pg_detail

// Exact draw from PG(1, z): alternating-series accept/reject on the
// exponentially tilted Jacobi density (Polson-Scott-Windle; Windle 2013,
// Algorithm 6). No truncated-sum approximation.
inline double sample_pg1(double z_in, Rng& rng) {
    if (!std::isfinite(z_in)) throw std::invalid_argument("sample_pg1: z must be finite");
    const double z = std::fabs(z_in) * 0.5;
    const double fz = M_PI * M_PI * 0.125 + 0.5 * z * z;
    const double p_right = pg_detail::mass_texpon(z);
    for (;;) {
        double x;
        if (rng.uniform() < p_right) {
            x = pg_detail::kTrunc + rng.exponential() / fz;
        } else {
            x = pg_detail::rtigauss(z, pg_detail::kTrunc, rng);
        }
        double s = pg_detail::a_coef(0, x);
        const double y = rng.uniform() * s;
        for (int n = 1;; ++n) {
            if (n & 1) {
                s -= pg_detail::a_coef(n, x);
                if (y <= s) return 0.25 * x;
            } else {
                s += pg_detail::a_coef(n, x);
                if (y > s) break;
            }
        }
    }
}

// E[PG(1, z)] = tanh(z/2) / (2 z), continuous at 0 with value 1/4.
inline double pg1_mean(double z) {
    if (std::fabs(z) < 1e-8) return 0.25 - z * z / 48.0;
    return std::tanh(0.5 * z) / (2.0 * z);
}

}  // namespace cpart
