#pragma once

// Closed-form reference values used as test oracles.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

/// Antiderivative of Phi(-x).
inline double upper_tail_integral(double x) { return x * normal_cdf(-x) - normal_pdf(x); }

/// Log multivariate beta function.
inline double log_beta(const std::vector<double>& a) {
    double s = 0.0, t = 0.0;
    for (double v : a) {
        s += std::lgamma(v);
        t += v;
    }
    return s - std::lgamma(t);
}

/// Two-sided Kolmogorov-Smirnov statistic of `x` against `cdf`.
template <class Cdf>
double ks_statistic(std::vector<double> x, Cdf cdf) {
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

/// Asymptotic KS critical value at significance 0.01.
inline double ks_critical_001(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

}  // namespace oracle
