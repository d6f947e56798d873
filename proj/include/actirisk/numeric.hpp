#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>

#include "actirisk/common.hpp"

namespace actirisk {

inline double logistic(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Regularized upper incomplete gamma Q(a, x); series/continued-fraction split
// as in the classic gammp/gammq pair.
double regularized_gamma_q(double a, double x);

// Upper-tail probability of a chi-square distribution with df degrees of freedom.
inline double chi_square_upper_tail(double statistic, int df) {
    if (df <= 0) throw ValidationError("chi_square_upper_tail: df must be positive");
    if (statistic <= 0.0) return 1.0;
    return regularized_gamma_q(0.5 * df, 0.5 * statistic);
}

// Adaptive Simpson quadrature with relative tolerance.
double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                        double rel_tol);

inline double mean_of(std::span<const double> xs) {
    if (xs.empty()) throw ValidationError("mean_of: empty input");
    double s = 0.0;
    for (const double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// Population variance (1/n).
inline double variance_of(std::span<const double> xs) {
    const double m = mean_of(xs);
    double s = 0.0;
    for (const double x : xs) s += (x - m) * (x - m);
    return s / static_cast<double>(xs.size());
}

// Sample standard deviation (1/(n-1)); n==1 yields 0.
inline double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (const double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

inline double pearson_correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ValidationError("pearson_correlation: need equal lengths >= 2");
    }
    const double mx = mean_of(x);
    const double my = mean_of(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw ValidationError("pearson_correlation: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

} // namespace actirisk
