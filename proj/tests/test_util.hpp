#pragma once

// Helpers shared across the test suites: finite-difference oracles, gradient
// comparison, random matrices, an inverse normal CDF for quadrature grids.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "sslcal/matrix.hpp"
#include "sslcal/rng.hpp"

namespace testutil {

// Central finite differences over an arbitrary parameter buffer. `eval` must
// recompute the scalar loss from the (possibly perturbed) buffer contents.
inline std::vector<double> finite_diff(std::vector<double>& values,
                                       const std::function<double()>& eval,
                                       double h = 1e-5) {
    std::vector<double> grad(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double orig = values[i];
        values[i] = orig + h;
        const double up = eval();
        values[i] = orig - h;
        const double down = eval();
        values[i] = orig;
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

// Relative comparison with a dead zone for near-zero pairs.
inline double max_rel_err(std::span<const double> analytic,
                          std::span<const double> numeric,
                          double dead_zone = 1e-7) {
    double worst = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double a = analytic[i], n = numeric[i];
        const double denom = std::max(std::abs(a), std::abs(n));
        if (denom < dead_zone) continue;
        worst = std::max(worst, std::abs(a - n) / denom);
    }
    return worst;
}

inline sslcal::Matrix random_matrix(std::size_t rows, std::size_t cols,
                                    sslcal::Rng& rng, double scale = 1.0) {
    sslcal::Matrix m(rows, cols);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

inline sslcal::Matrix random_distribution_rows(std::size_t rows, std::size_t cols,
                                               sslcal::Rng& rng) {
    sslcal::Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            m(i, j) = -std::log(1.0 - rng.uniform());
            sum += m(i, j);
        }
        for (std::size_t j = 0; j < cols; ++j) m(i, j) /= sum;
    }
    return m;
}

// Acklam's rational approximation of the inverse normal CDF; plenty accurate
// for building quadrature grids in tests.
inline double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
                c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
                 c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
           q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

}  // namespace testutil
