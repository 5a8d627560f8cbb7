// Chi-square statistics of inlier residuals.
//
// Signed Sampson residuals of inliers are modeled as N(0, sigma^2), so the
// squared residuals normalized by sigma^2 follow a chi-square distribution
// with one degree of freedom. Everything here is specialized to k = 1, where
// the CDF has the closed form erf(sqrt(x/2)); quantiles are obtained by
// bisection on that closed form.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace sigmafit {

// P(Z^2 <= x) for Z standard normal.
inline double chi2_cdf(double x) {
    if (std::isnan(x) || x < 0.0)
        throw std::domain_error("chi2_cdf: x must be >= 0");
    return std::erf(std::sqrt(0.5 * x));
}

// Density of the chi-square(1) distribution, x > 0.
inline double chi2_pdf(double x) {
    if (x <= 0.0)
        return 0.0;
    return std::exp(-0.5 * x) / std::sqrt(2.0 * std::numbers::pi * x);
}

// Inverse of chi2_cdf, by bisection. p in [0, 1).
inline double chi2_quantile(double p) {
    if (std::isnan(p) || p < 0.0 || p >= 1.0)
        throw std::domain_error("chi2_quantile: p must be in [0, 1)");
    if (p == 0.0)
        return 0.0;

    double lo = 0.0;
    double hi = 1.0;
    while (chi2_cdf(hi) < p) {
        hi *= 2.0;
        if (hi > 1e6)
            break;  // erf saturates near x ~ 75; p < 1 is always reachable
    }
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (mid == lo || mid == hi)
            break;
        if (chi2_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

// Quantile of the absolute residual |Z|, i.e. sqrt of the chi-square(1)
// quantile. This is the factor between the noise scale sigma (pixels) and
// the inlier threshold tau (pixels): tau = chi_quantile(alpha) * sigma.
inline double chi_quantile(double p) { return std::sqrt(chi2_quantile(p)); }

namespace detail {

// Survival function of the Kolmogorov distribution,
// Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_pvalue(double lambda) {
    if (lambda < 1e-8)
        return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int j = 1; j <= 100; ++j) {
        const double term = std::exp(-2.0 * j * j * lambda * lambda);
        sum += sign * term;
        if (term < 1e-12 * std::abs(sum) || term < 1e-300)
            break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

}  // namespace detail

// One-sample KS test of already-transformed values u_i = F(x_i) against
// uniform[0,1]. Returns the asymptotic p-value with the Stephens small-sample
// correction. Input is copied and sorted.
inline double ks_uniform_pvalue(std::vector<double> u) {
    const std::size_t n = u.size();
    if (n == 0)
        throw std::invalid_argument("ks_uniform_pvalue: empty sample");
    std::sort(u.begin(), u.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double lo = static_cast<double>(i) / static_cast<double>(n);
        const double hi = static_cast<double>(i + 1) / static_cast<double>(n);
        d = std::max(d, std::max(hi - u[i], u[i] - lo));
    }
    const double sqn = std::sqrt(static_cast<double>(n));
    const double lambda = (sqn + 0.12 + 0.11 / sqn) * d;
    return detail::kolmogorov_pvalue(lambda);
}

// Goodness of fit of squared residuals against sigma^2 * chi-square(1).
// Returns the KS p-value; small values reject the inlier model.
inline double chi2_gof(std::span<const double> residuals_sq, double sigma) {
    if (residuals_sq.size() < 20)
        throw std::invalid_argument("chi2_gof: need at least 20 samples");
    if (!(sigma > 0.0))
        throw std::domain_error("chi2_gof: sigma must be > 0");
    const double s2 = sigma * sigma;
    std::vector<double> u;
    u.reserve(residuals_sq.size());
    for (double r2 : residuals_sq) {
        if (r2 < 0.0)
            throw std::domain_error("chi2_gof: negative squared residual");
        u.push_back(chi2_cdf(r2 / s2));
    }
    return ks_uniform_pvalue(std::move(u));
}

}  // namespace sigmafit
