#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "scalefit/core.hpp"

namespace scalefit::stats {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// P(|Z| >= |z|) for a standard normal Z.
inline double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::numbers::sqrt2); }

inline double normal_quantile(double p) {
    return boost::math::quantile(boost::math::normal_distribution<double>{}, p);
}

/// Survival function of the chi-square distribution; accurate far into the
/// tail (p-values well below 1e-100).
inline double chi2_sf(double x, double dof) {
    if (!(dof > 0.0)) fail_input("chi2_sf: dof must be positive");
    if (x <= 0.0) return 1.0;
    if (!std::isfinite(x)) return 0.0;
    return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

inline double mean(std::span<const double> xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

/// Unbiased sample standard deviation.
inline double sample_sd(std::span<const double> xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

/// Empirical quantile with linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) fail_input("quantile of an empty sample");
    if (sorted.size() == 1) return sorted[0];
    q = std::clamp(q, 0.0, 1.0);
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    return quantile_sorted(xs, q);
}

/// Unbiased sample covariance of the rows of `samples`.
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& samples) {
    const auto r = samples.rows();
    if (r < 2) fail_input("sample_covariance: need at least two samples");
    const Eigen::RowVectorXd mu = samples.colwise().mean();
    const Eigen::MatrixXd centered = samples.rowwise() - mu;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(r - 1);
    return 0.5 * (cov + cov.transpose());
}

}  // namespace scalefit::stats
