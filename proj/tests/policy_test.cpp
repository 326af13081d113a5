#include <algorithm>
#include <cmath>

#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include "scalefit/policy.hpp"
#include "test_support.hpp"

namespace scalefit {
namespace {

using testing::error_kind_of;
using testing::rel_err;

// Minimizes the reducible loss along 6 N D = C by a 1-D search over log N.
Allocation brute_force_allocation(const ScalingLawParams& p, double compute) {
    const auto reducible = [&](double log_n) {
        const double n = std::exp(log_n), d = compute / (6.0 * n);
        return p.A * std::pow(n, -p.alpha) + p.B * std::pow(d, -p.beta);
    };
    const double log_c6 = std::log(compute / 6.0);
    const auto r = boost::math::tools::brent_find_minima(reducible, 0.0, log_c6, 60);
    const double n = std::exp(r.first), d = compute / (6.0 * n);
    return {n, d, d / n};
}

TEST(PolicyExponents, FrozenValues) {
    EXPECT_LE(rel_err(policy_exponents(reference::refit_no_outliers).a_policy, 0.512612107623318), 1e-12);
    EXPECT_LE(rel_err(policy_exponents(reference::hoffmann_unrounded).a_policy, 0.456497356192918), 1e-12);
    EXPECT_DOUBLE_EQ(policy_exponents(0.3, 0.3).a_policy, 0.5);
    const auto e = policy_exponents(0.2, 0.6);
    EXPECT_DOUBLE_EQ(e.a_policy + e.b_policy, 1.0);
    EXPECT_EQ(error_kind_of([] { policy_exponents(0.0, 0.0); }), ErrorKind::numerical);
}

TEST(OptimalAllocation, FrozenRatios) {
    const auto h = optimal_allocation(reference::hoffmann_unrounded, 5.88e23);
    EXPECT_LE(rel_err(h.n_opt, 4.0691716324e10), 1e-9);
    EXPECT_LE(rel_err(h.d_opt, 2.4083525801e12), 1e-9);
    EXPECT_LE(rel_err(h.ratio, 59.185328063832), 1e-11);
    EXPECT_LE(rel_err(optimal_allocation(reference::refit_no_outliers, 5.88e23).ratio, 18.381682057701), 1e-11);
    EXPECT_LE(rel_err(optimal_allocation(reference::refit_no_outliers, 1e26).ratio, 16.148029848934), 1e-11);
}

TEST(OptimalAllocation, SymmetricLawSplitsEvenly) {
    const ScalingLawParams p{1.5, 400, 400, 0.3, 0.3};
    for (double c : {6e18, 6e22, 6e26}) {
        const auto a = optimal_allocation(p, c);
        EXPECT_LE(rel_err(a.n_opt, std::sqrt(c / 6)), 1e-12);
        EXPECT_LE(rel_err(a.ratio, 1.0), 1e-12);
    }
}

TEST(OptimalAllocation, MatchesOneDimensionalSearch) {
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const auto p = testing::random_params(rng);
        const double c = std::pow(10.0, uniform(rng, 18, 26));
        const auto closed = optimal_allocation(p, c);
        const auto brute = brute_force_allocation(p, c);
        EXPECT_LE(rel_err(closed.n_opt, brute.n_opt), 1e-6) << i;
        EXPECT_LE(rel_err(closed.d_opt, brute.d_opt), 1e-6) << i;
    }
}

TEST(OptimalAllocation, ScalesAsPowerOfCompute) {
    const auto& p = reference::refit_no_outliers;
    const double a = policy_exponents(p).a_policy;
    for (double c : {1e20, 1e23, 1e25}) {
        const auto lo = optimal_allocation(p, c), hi = optimal_allocation(p, 10 * c);
        EXPECT_LE(rel_err(hi.n_opt / lo.n_opt, std::pow(10.0, a)), 1e-11);
        EXPECT_LE(rel_err(hi.d_opt / lo.d_opt, std::pow(10.0, 1 - a)), 1e-11);
        EXPECT_LE(rel_err(6 * lo.n_opt * lo.d_opt, c), 1e-12);
    }
}

TEST(OptimalAllocation, DependsOnlyOnWeightedCoefficientRatio) {
    const ScalingLawParams p{1.7, 400, 1200, 0.3, 0.4};
    // alpha A / (beta B) unchanged when both coefficients are scaled.
    const ScalingLawParams q{2.5, 800, 2400, 0.3, 0.4};
    EXPECT_LE(rel_err(optimal_allocation(p, 1e22).n_opt, optimal_allocation(q, 1e22).n_opt), 1e-12);
    const ScalingLawParams r{1.7, 800, 1200, 0.3, 0.4};
    EXPECT_GT(optimal_allocation(r, 1e22).n_opt, optimal_allocation(p, 1e22).n_opt);
}

TEST(OptimalAllocation, DegenerateAndInvalidInputs) {
    const auto a = optimal_allocation(LogSpaceParams{5, 5, 0, -0.1, 0.3}, 1e20);
    EXPECT_TRUE(std::isnan(a.n_opt));
    EXPECT_TRUE(std::isnan(a.ratio));
    EXPECT_EQ(error_kind_of([] { optimal_allocation(reference::hoffmann_rounded, 0.0); }), ErrorKind::bad_input);
    EXPECT_EQ(error_kind_of([] { optimal_allocation(LogSpaceParams{1, 1, 0, 0.3, -0.3}, 1e20); }),
              ErrorKind::numerical);
}

TEST(ComputeGrid, DefaultsAndErrors) {
    const auto g = compute_grid();
    ASSERT_EQ(g.size(), 40u);
    EXPECT_EQ(g.front(), 1e18);
    EXPECT_EQ(g.back(), 1e28);
    for (std::size_t i = 1; i < g.size(); ++i) EXPECT_NEAR(std::log10(g[i] / g[i - 1]), 10.0 / 39.0, 1e-12);
    EXPECT_EQ(compute_grid(1e20, 1e20, 1).size(), 1u);
    EXPECT_EQ(error_kind_of([] { compute_grid(1e20, 1e18); }), ErrorKind::bad_input);
    EXPECT_EQ(error_kind_of([] { compute_grid(1e18, 1e20, 0); }), ErrorKind::bad_input);
}

Eigen::MatrixXd jittered_samples(const ScalingLawParams& p, std::size_t n, double scale, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::MatrixXd s(static_cast<Eigen::Index>(n), 5);
    const Vec5 base = p.to_log().to_vector();
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (int k = 0; k < 5; ++k) s(i, k) = base[k] + scale * (k >= 3 ? 0.1 : 1.0) * standard_normal(rng);
    return s;
}

TEST(PolicyBand, IdenticalSamplesGiveZeroWidth) {
    const auto& p = reference::refit_no_outliers;
    const auto curve = policy_band(p, jittered_samples(p, 150, 0.0, 1), compute_grid(1e19, 1e25, 7));
    ASSERT_TRUE(curve.has_band);
    for (std::size_t i = 0; i < curve.compute.size(); ++i) {
        EXPECT_LE(rel_err(curve.ratio_lo[i], curve.optimum[i].ratio), 1e-10);
        EXPECT_LE(rel_err(curve.ratio_hi[i], curve.optimum[i].ratio), 1e-10);
    }
}

TEST(PolicyBand, MatchesBruteForceQuantiles) {
    const auto& p = reference::refit_no_outliers;
    const auto samples = jittered_samples(p, 1000, 0.05, 2);
    const auto grid = compute_grid(1e19, 1e25, 5);
    const auto curve = policy_band(p, samples, grid, 0.8);
    EXPECT_EQ(curve.band_samples + curve.degenerate_samples, 1000u);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        std::vector<double> ratios;
        for (Eigen::Index r = 0; r < samples.rows(); ++r) {
            const auto q = LogSpaceParams::from_vector(samples.row(r).transpose());
            if (q.degenerate()) continue;
            const auto a = brute_force_allocation(q.to_natural(), grid[i]);
            ratios.push_back(a.ratio);
        }
        std::sort(ratios.begin(), ratios.end());
        const double lo = ratios[static_cast<std::size_t>(0.1 * (ratios.size() - 1))];
        const double hi = ratios[static_cast<std::size_t>(0.9 * (ratios.size() - 1))];
        EXPECT_LE(rel_err(curve.ratio_lo[i], lo), 0.01) << i;
        EXPECT_LE(rel_err(curve.ratio_hi[i], hi), 0.01) << i;
        EXPECT_LT(curve.ratio_lo[i], curve.optimum[i].ratio);
        EXPECT_GT(curve.ratio_hi[i], curve.optimum[i].ratio);
    }
}

TEST(PolicyBand, RequiresEnoughSamplesAndValidCoverage) {
    const auto& p = reference::refit_no_outliers;
    const auto grid = compute_grid(1e19, 1e21, 3);
    EXPECT_EQ(error_kind_of([&] { policy_band(p, jittered_samples(p, 99, 0.01, 3), grid); }), ErrorKind::bad_input);
    EXPECT_NO_THROW(policy_band(p, jittered_samples(p, 100, 0.01, 3), grid));
    EXPECT_EQ(error_kind_of([&] { policy_band(p, jittered_samples(p, 200, 0.01, 3), grid, 1.0); }),
              ErrorKind::bad_input);
    EXPECT_EQ(error_kind_of([&] { policy_band(p, jittered_samples(p, 200, 0.01, 3), grid, 0.0); }),
              ErrorKind::bad_input);
}

TEST(PolicyCurve, CsvLayout) {
    const auto curve = policy_curve(reference::hoffmann_unrounded, compute_grid(1e20, 1e22, 3));
    const auto csv = curve.to_csv();
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "compute,n_opt,d_opt,ratio,lo,hi");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_FALSE(curve.has_band);
}

}  // namespace
}  // namespace scalefit
