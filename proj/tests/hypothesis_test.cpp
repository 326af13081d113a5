#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/minima.hpp>
#include <gtest/gtest.h>

#include "scalefit/hypothesis.hpp"
#include "scalefit/synthetic.hpp"
#include "test_support.hpp"

namespace scalefit {
namespace {

using testing::error_kind_of;
using testing::rel_err;

// Closed form of the chi-square survival function with five degrees of freedom.
double chi2_sf5_closed(double x) {
    return std::erfc(std::sqrt(x / 2)) +
           std::sqrt(2 / std::numbers::pi) * std::exp(-x / 2) * (std::sqrt(x) + std::pow(x, 1.5) / 3);
}

// Integral of exp(-h(x)) over the real line by quadrature on each branch.
double integrate_density(const std::function<double(double)>& f, double mu, double edge) {
    boost::math::quadrature::exp_sinh<double> tail;
    const double inner = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, mu - edge, mu + edge, 15, 1e-14);
    const double right = tail.integrate([&](double t) { return f(mu + edge + t); }, 1e-14);
    const double left = tail.integrate([&](double t) { return f(mu - edge - t); }, 1e-14);
    return inner + right + left;
}

Mat5 well_conditioned_covariance(std::uint64_t seed) {
    Rng rng(seed);
    Mat5 m;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) m(i, j) = standard_normal(rng);
    return m * m.transpose() + Mat5::Identity();
}

TEST(Chi2Equality, IdenticalVectorsGivePValueOne) {
    const Vec5 v = reference::hoffmann_unrounded.to_log().to_vector();
    const auto rep = chi2_equality_test(v, v, well_conditioned_covariance(1));
    EXPECT_EQ(rep.statistic, 0.0);
    EXPECT_EQ(rep.p_value, 1.0);
    EXPECT_EQ(rep.dof, 5);
    EXPECT_EQ(rep.method, TestMethod::chi2_equality);
}

TEST(Chi2Equality, SurvivalFunctionMatchesHighPrecisionValues) {
    const std::pair<double, double> table[] = {
        {0.5, 0.99212329323262959},     {1, 0.96256577324729637},        {5, 0.41588018699550792},
        {20, 0.0012497305630313754},    {50, 1.3857973367009593e-9},     {100, 5.2851483609432400e-20},
        {200, 2.8406228986415317e-41},  {400, 2.9666446590828849e-84},   {83.98, 1.2316211193671e-16},
        {86.74, 3.2488404322434e-17}};
    for (const auto& [x, want] : table) {
        EXPECT_LE(rel_err(stats::chi2_sf(x, 5), want), 1e-10) << x;
    }
}

TEST(Chi2Equality, AgreesWithClosedFormOverRange) {
    for (double x = 0.01; x < 600; x *= 1.1) EXPECT_LE(rel_err(stats::chi2_sf(x, 5), chi2_sf5_closed(x)), 1e-10) << x;
}

TEST(Chi2Equality, StatisticIsQuadraticForm) {
    const Mat5 s = well_conditioned_covariance(2);
    Vec5 mu, nu;
    mu << 6.0, 7.0, 0.5, 0.34, 0.28;
    nu << 6.1, 7.3, 0.52, 0.35, 0.3;
    const auto rep = chi2_equality_test(mu, nu, s);
    const Vec5 d = mu - nu;
    EXPECT_LE(rel_err(rep.statistic, d.dot(s.inverse() * d)), 1e-12);
    EXPECT_LE(rel_err(rep.p_value, chi2_sf5_closed(rep.statistic)), 1e-10);
}

TEST(Chi2Equality, InvariantUnderLinearReparameterization) {
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat5 s = well_conditioned_covariance(100 + trial);
        Vec5 mu, nu;
        for (int k = 0; k < 5; ++k) {
            mu[k] = standard_normal(rng);
            nu[k] = standard_normal(rng);
        }
        Mat5 t = Mat5::Identity();
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j) t(i, j) += 0.3 * uniform(rng, -1, 1);
        const auto a = chi2_equality_test(mu, nu, s);
        const auto b = chi2_equality_test(t * mu, t * nu, t * s * t.transpose());
        EXPECT_LE(rel_err(b.statistic, a.statistic), 1e-8);
    }
}

TEST(Chi2Equality, RejectsSingularOrIllConditionedCovariance) {
    const Vec5 mu = Vec5::Zero(), nu = Vec5::Ones();
    Mat5 singular = Mat5::Identity();
    singular(4, 4) = 0.0;
    EXPECT_EQ(error_kind_of([&] { chi2_equality_test(mu, nu, singular); }), ErrorKind::numerical);
    Mat5 ill = Mat5::Identity();
    ill(0, 0) = 1e-13;
    EXPECT_EQ(error_kind_of([&] { chi2_equality_test(mu, nu, ill); }), ErrorKind::numerical);
    Mat5 nan = Mat5::Identity();
    nan(1, 2) = NAN;
    EXPECT_EQ(error_kind_of([&] { chi2_equality_test(mu, nu, nan); }), ErrorKind::numerical);
    Mat5 ok = Mat5::Identity();
    ok(0, 0) = 1e-11;
    EXPECT_NO_THROW(chi2_equality_test(mu, nu, ok));
}

TEST(ZTest, PublishedParameterComparisons) {
    const auto e = per_parameter_z_test(1.6934, 1.8172, 0.03);
    EXPECT_LE(rel_err(e.p_value, 3.680592840225408e-5), 1e-10);
    const auto beta = per_parameter_z_test(0.2849, 0.452, 0.0543);
    EXPECT_LE(rel_err(beta.p_value, 0.002088512756084003), 1e-10);
    EXPECT_EQ(per_parameter_z_test(1, 1, 0.5).p_value, 1.0);
    EXPECT_EQ(error_kind_of([] { per_parameter_z_test(1, 2, 0); }), ErrorKind::bad_input);
}

TEST(NormalDistribution, ReferenceValues) {
    EXPECT_LE(rel_err(stats::normal_cdf(-5), 2.8665157187919391e-7), 1e-13);
    EXPECT_LE(rel_err(stats::normal_cdf(1), 0.84134474606854295), 1e-15);
    EXPECT_LE(rel_err(stats::normal_cdf(-10), 7.619853024160526e-24), 1e-12);
    EXPECT_LE(rel_err(stats::normal_quantile(0.9), 1.2815515655446004), 1e-14);
    for (double p : {1e-10, 0.01, 0.3, 0.5, 0.77, 0.999}) EXPECT_LE(rel_err(stats::normal_cdf(stats::normal_quantile(p)), p), 1e-12);
}

TEST(HuberDensity, NormalizerMatchesHighPrecisionValues) {
    EXPECT_LE(rel_err(huber_normalizer(1e-3), 2000.000999999916667), 1e-14);
    EXPECT_LE(rel_err(huber_normalizer(0.1), 20.099916749925653), 1e-14);
    EXPECT_LE(rel_err(huber_normalizer(1.0), 2.9243101032095645), 1e-14);
    EXPECT_EQ(error_kind_of([] { huber_normalizer(0); }), ErrorKind::bad_input);
}

TEST(HuberDensity, NormalizerMatchesQuadrature) {
    for (double delta : {1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0}) {
        const auto f = [&](double x) { return std::exp(-huber(delta, x)); };
        EXPECT_LE(rel_err(integrate_density(f, 0.0, delta), huber_normalizer(delta)), 1e-10) << delta;
    }
}

TEST(HuberDensity, IntegratesToOne) {
    for (double sigma : {0.5, 1.0, 2.0}) {
        for (double delta : {1e-3, 0.1, 1.0}) {
            const HuberDensityParams p{0.3, sigma, delta};
            const auto f = [&](double x) { return std::exp(huber_log_density(x, p)); };
            EXPECT_NEAR(integrate_density(f, p.mu, delta * sigma), 1.0, 1e-9) << sigma << " " << delta;
        }
    }
}

TEST(HuberDensity, ShapeAndLossIdentity) {
    const HuberDensityParams p{1.0, 1.0, 0.5};
    const double peak = huber_log_density(1.0, p);
    for (double x : {0.1, 0.5, 1.0, 3.0}) {
        EXPECT_LT(huber_log_density(1.0 + x, p), peak);
        EXPECT_DOUBLE_EQ(huber_log_density(1.0 + x, p), huber_log_density(1.0 - x, p));
        EXPECT_NEAR(-huber_log_density(1.0 + x, p) - std::log(huber_normalizer(p.delta)), huber(p.delta, x), 1e-14);
    }
    EXPECT_EQ(error_kind_of([] { huber_log_density(0, {0, 0, 1}); }), ErrorKind::bad_input);
}

TEST(SigmaProfile, MatchesBruteForceMaximization) {
    Rng rng(8);
    for (double delta : {1e-3, 0.1, 1.0}) {
        std::vector<double> r(150);
        for (auto& x : r) x = 0.02 * standard_normal(rng);
        const auto prof = fit_sigma_from_residuals(r, delta);
        const auto brute = boost::math::tools::brent_find_minima(
            [&](double ls) { return -huber_log_likelihood(r, std::exp(ls), delta); }, std::log(1e-8), std::log(10.0), 52);
        EXPECT_LE(rel_err(prof.sigma_hat, std::exp(brute.first)), 1e-6) << delta;
        EXPECT_NEAR(prof.log_likelihood, -brute.second, 1e-9 * std::abs(brute.second));
        EXPECT_GE(prof.log_likelihood, huber_log_likelihood(r, 1.01 * prof.sigma_hat, delta));
        EXPECT_GE(prof.log_likelihood, huber_log_likelihood(r, 0.99 * prof.sigma_hat, delta));
    }
}

TEST(SigmaProfile, ErrorPaths) {
    EXPECT_EQ(error_kind_of([] { fit_sigma_from_residuals({0.0, 0.0}, 1e-3); }), ErrorKind::numerical);
    EXPECT_EQ(error_kind_of([] { fit_sigma_from_residuals({}, 1e-3); }), ErrorKind::bad_input);
}

TEST(LikelihoodRatio, PublishedLogLikelihoods) {
    // 2 (ll_alt - ll_null) = 83.98 and 86.74
    const auto a = likelihood_ratio_test(0.0, 41.99);
    EXPECT_LE(rel_err(a.p_value, 1.2316211193671e-16), 1e-9);
    const auto b = likelihood_ratio_test(-10.0, 33.37);
    EXPECT_LE(rel_err(b.p_value, 3.2488404322434e-17), 1e-9);
    EXPECT_EQ(a.dof, 5);
    EXPECT_EQ(a.method, TestMethod::likelihood_ratio);
}

TEST(LikelihoodRatio, EdgeCasesAndMonotonicity) {
    EXPECT_EQ(likelihood_ratio_test(3.0, 3.0).p_value, 1.0);
    const auto clamped = likelihood_ratio_test(3.0, 2.0);
    EXPECT_TRUE(clamped.clamped);
    EXPECT_EQ(clamped.statistic, 0.0);
    EXPECT_EQ(clamped.p_value, 1.0);
    double prev = 1.0;
    for (double gap = 0.5; gap < 200; gap += 0.5) {
        const double p = likelihood_ratio_test(0.0, gap).p_value;
        EXPECT_LT(p, prev);
        prev = p;
    }
    EXPECT_EQ(error_kind_of([] { likelihood_ratio_test(0, 1, 0); }), ErrorKind::bad_input);
}

TEST(RoundingBias, Examples) {
    EXPECT_LE(rel_err(rounding_bias(0.2849, 0.28, 1e11), 0.132139648433041), 1e-12);
    EXPECT_EQ(rounding_bias(0.3, 0.3, 1e12), 0.0);
    EXPECT_LT(rounding_bias(0.28, 0.2849, 1e11), 0.0);
    EXPECT_EQ(error_kind_of([] { rounding_bias(0.3, 0.28, 0); }), ErrorKind::bad_input);
}

TEST(PercentileP, CountsFarTail) {
    std::vector<double> s(99);
    for (int i = 0; i < 99; ++i) s[static_cast<std::size_t>(i)] = i;
    EXPECT_NEAR(bootstrap_percentile_p(s, -1.0), 2.0 / 100.0, 1e-15);
    EXPECT_NEAR(bootstrap_percentile_p(s, 9.5), 2.0 * 11 / 100.0, 1e-15);
    EXPECT_EQ(bootstrap_percentile_p(s, 49.0), 1.0);
    EXPECT_EQ(error_kind_of([] { bootstrap_percentile_p({}, 0); }), ErrorKind::bad_input);
}

TEST(JointLikelihood, NeverBelowProfile) {
    SyntheticDesign d;
    d.n_points = 120;
    d.noise_sigma = 0.02;
    d.random_design = true;
    const auto ds = generate_law_dataset(reference::refit_no_outliers, d, 9);
    for (const auto& start : {reference::refit_no_outliers, reference::hoffmann_unrounded}) {
        const auto prof = fit_sigma_profile(start, ds, 1e-3);
        const auto joint = fit_joint_likelihood(ds, start.to_log(), 1e-3);
        EXPECT_GE(joint.log_likelihood, prof.log_likelihood - 1e-9);
        EXPECT_GT(joint.sigma, 0.0);
    }
}

}  // namespace
}  // namespace scalefit
