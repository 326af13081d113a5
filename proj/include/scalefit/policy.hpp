#pragma once

// Compute-optimal allocation under C = k * N * D (k = 6 by default).
//
// Minimizing A / N^alpha + B / D^beta with D = C / (k N) gives
//
//     N_opt^(alpha + beta) = (alpha A) / (beta B) * (C / k)^beta
//
// so N_opt grows as C^a with a = beta / (alpha + beta), and D_opt as C^(1 - a).

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/stats.hpp"

namespace scalefit {

struct PolicyExponents {
    double a_policy = 0.0;
    double b_policy = 0.0;
};

inline PolicyExponents policy_exponents(double alpha, double beta) {
    if (alpha + beta == 0.0) fail_numerical("policy_exponents: alpha + beta == 0");
    const double a = beta / (alpha + beta);
    return {a, 1.0 - a};
}

inline PolicyExponents policy_exponents(const ScalingLawParams& p) {
    return policy_exponents(p.alpha, p.beta);
}

struct Allocation {
    double n_opt = 0.0;
    double d_opt = 0.0;
    double ratio = 0.0;  // tokens per parameter
};

/// Closed-form optimum from log-space parameters; NaN fields when the
/// exponents are not both positive.
inline Allocation optimal_allocation(const LogSpaceParams& p, double compute,
                                     double flop_multiplier = default_flop_multiplier) {
    if (!positive_finite(compute) || !positive_finite(flop_multiplier))
        fail_input("optimal_allocation: compute and multiplier must be positive");
    const double s = p.alpha + p.beta;
    if (s == 0.0) fail_numerical("optimal_allocation: alpha + beta == 0");
    if (p.degenerate()) {
        const double nan = std::numeric_limits<double>::quiet_NaN();
        return {nan, nan, nan};
    }
    const double log_budget = std::log(compute / flop_multiplier);
    const double log_n = (std::log(p.alpha) + p.a - std::log(p.beta) - p.b + p.beta * log_budget) / s;
    const double log_d = log_budget - log_n;
    return {std::exp(log_n), std::exp(log_d), std::exp(log_d - log_n)};
}

inline Allocation optimal_allocation(const ScalingLawParams& p, double compute,
                                     double flop_multiplier = default_flop_multiplier) {
    p.validate();
    return optimal_allocation(p.to_log(), compute, flop_multiplier);
}

/// `points` log-spaced values over [lo, hi], endpoints included.
inline std::vector<double> compute_grid(double lo = 1e18, double hi = 1e28, std::size_t points = 40) {
    if (!positive_finite(lo) || !positive_finite(hi) || hi < lo)
        fail_input("compute_grid: need 0 < lo <= hi");
    if (points == 0) fail_input("compute_grid: need at least one point");
    std::vector<double> out(points);
    const double l0 = std::log10(lo), l1 = std::log10(hi);
    for (std::size_t i = 0; i < points; ++i) {
        const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
        out[i] = std::pow(10.0, l0 + t * (l1 - l0));
    }
    out.front() = lo;
    if (points > 1) out.back() = hi;
    return out;
}

struct PolicyCurve {
    std::vector<double> compute;
    std::vector<Allocation> optimum;
    bool has_band = false;
    double coverage = 0.0;
    std::vector<double> ratio_lo;
    std::vector<double> ratio_hi;
    std::size_t band_samples = 0;      // samples contributing to the band
    std::size_t degenerate_samples = 0;

    std::string to_csv() const {
        std::string out = "compute,n_opt,d_opt,ratio,lo,hi\n";
        for (std::size_t i = 0; i < compute.size(); ++i) {
            const auto& o = optimum[i];
            if (has_band)
                out += fmt::format("{},{},{},{},{},{}\n", compute[i], o.n_opt, o.d_opt, o.ratio,
                                   ratio_lo[i], ratio_hi[i]);
            else
                out += fmt::format("{},{},{},{},,\n", compute[i], o.n_opt, o.d_opt, o.ratio);
        }
        return out;
    }
};

inline PolicyCurve policy_curve(const ScalingLawParams& params, const std::vector<double>& grid,
                                double flop_multiplier = default_flop_multiplier) {
    PolicyCurve c;
    c.compute = grid;
    for (double C : grid) c.optimum.push_back(optimal_allocation(params, C, flop_multiplier));
    return c;
}

inline constexpr std::size_t min_band_samples = 100;

/// Pointwise band of the tokens-per-parameter ratio: for each compute value,
/// the [(1-coverage)/2, (1+coverage)/2] empirical quantiles over samples.
inline void attach_band(PolicyCurve& curve, const Eigen::MatrixXd& samples, double coverage = 0.8,
                        double flop_multiplier = default_flop_multiplier) {
    if (samples.rows() < static_cast<Eigen::Index>(min_band_samples))
        fail_input(fmt::format("policy_band: need at least {} samples, got {}", min_band_samples,
                               samples.rows()));
    if (!(coverage > 0.0 && coverage < 1.0)) fail_input("policy_band: coverage must be in (0, 1)");
    std::vector<LogSpaceParams> usable;
    for (Eigen::Index r = 0; r < samples.rows(); ++r) {
        const auto p = LogSpaceParams::from_vector(samples.row(r).transpose());
        if (p.degenerate() || !p.finite())
            ++curve.degenerate_samples;
        else
            usable.push_back(p);
    }
    if (usable.size() < 2) fail_numerical("policy_band: fewer than two usable samples");
    curve.has_band = true;
    curve.coverage = coverage;
    curve.band_samples = usable.size();
    curve.ratio_lo.clear();
    curve.ratio_hi.clear();
    const double q_lo = 0.5 * (1.0 - coverage), q_hi = 1.0 - q_lo;
    std::vector<double> ratios(usable.size());
    for (double C : curve.compute) {
        for (std::size_t i = 0; i < usable.size(); ++i)
            ratios[i] = optimal_allocation(usable[i], C, flop_multiplier).ratio;
        std::sort(ratios.begin(), ratios.end());
        curve.ratio_lo.push_back(stats::quantile_sorted(ratios, q_lo));
        curve.ratio_hi.push_back(stats::quantile_sorted(ratios, q_hi));
    }
}

inline PolicyCurve policy_band(const ScalingLawParams& central, const Eigen::MatrixXd& samples,
                               const std::vector<double>& grid, double coverage = 0.8,
                               double flop_multiplier = default_flop_multiplier) {
    auto curve = policy_curve(central, grid, flop_multiplier);
    attach_band(curve, samples, coverage, flop_multiplier);
    return curve;
}

}  // namespace scalefit
