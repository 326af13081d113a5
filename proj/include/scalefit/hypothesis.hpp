#pragma once

// Hypothesis tests on fitted scaling laws:
//  - chi-square test of parameter-vector equality under a bootstrap covariance,
//  - per-parameter two-sided z tests,
//  - the Huber probability density and likelihood-ratio test,
//  - the bias introduced by rounding the data exponent.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "scalefit/bfgs.hpp"
#include "scalefit/core.hpp"
#include "scalefit/objective.hpp"
#include "scalefit/stats.hpp"

namespace scalefit {

enum class TestMethod { chi2_equality, z_test, likelihood_ratio };

inline const char* to_string(TestMethod m) {
    switch (m) {
        case TestMethod::chi2_equality: return "chi2_equality";
        case TestMethod::z_test: return "z_test";
        case TestMethod::likelihood_ratio: return "likelihood_ratio";
    }
    return "unknown";
}

struct TestReport {
    double statistic = 0.0;
    int dof = 0;
    double p_value = 1.0;
    TestMethod method = TestMethod::z_test;
    std::string summary;
    double condition_number = 0.0;  // chi2_equality only
    bool clamped = false;           // likelihood_ratio: ll_alt < ll_null
};

inline constexpr double max_covariance_condition = 1e12;

inline TestReport chi2_equality_test(const Vec5& mu, const Vec5& nu, const Mat5& sigma) {
    if (!sigma.allFinite()) fail_numerical("chi2_equality_test: covariance has non-finite entries");
    const Mat5 sym = 0.5 * (sigma + sigma.transpose());
    Eigen::SelfAdjointEigenSolver<Mat5> eig(sym, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    const double cond = lmin > 0.0 ? lmax / lmin : std::numeric_limits<double>::infinity();
    if (!(lmin > 0.0) || cond > max_covariance_condition)
        fail_numerical(fmt::format(
            "chi2_equality_test: covariance is singular or ill-conditioned "
            "(eigenvalues in [{:.3e}, {:.3e}], condition {:.3e} > {:.0e})",
            lmin, lmax, cond, max_covariance_condition));
    const Vec5 diff = mu - nu;
    const Eigen::LDLT<Mat5> ldlt(sym);
    const double q = diff.dot(ldlt.solve(diff));

    TestReport rep;
    rep.method = TestMethod::chi2_equality;
    rep.statistic = q;
    rep.dof = 5;
    rep.p_value = stats::chi2_sf(q, 5);
    rep.condition_number = cond;
    rep.summary = fmt::format("(mu - nu)' Sigma^-1 (mu - nu) = {:.6g} on 5 dof", q);
    return rep;
}

inline TestReport per_parameter_z_test(double mu_k, double nu_k, double se_k) {
    if (!positive_finite(se_k)) fail_input("per_parameter_z_test: standard error must be > 0");
    TestReport rep;
    rep.method = TestMethod::z_test;
    rep.statistic = (nu_k - mu_k) / se_k;
    rep.dof = 1;
    rep.p_value = stats::normal_two_sided_p(rep.statistic);
    rep.summary = fmt::format("z = ({:.6g} - {:.6g}) / {:.6g} = {:.4g}", nu_k, mu_k, se_k,
                              rep.statistic);
    return rep;
}

/// Two-sided percentile p-value: how often the bootstrap distribution of the
/// estimator falls on the far side of the hypothesized value, doubled.
/// Uses (count + 1) / (R + 1) so the result is never exactly zero.
inline double bootstrap_percentile_p(const std::vector<double>& samples, double nu_k) {
    if (samples.empty()) fail_input("bootstrap_percentile_p: no samples");
    std::size_t below = 0, above = 0;
    for (double s : samples) {
        below += s <= nu_k;
        above += s >= nu_k;
    }
    const double r = static_cast<double>(samples.size());
    const double tail = static_cast<double>(std::min(below, above));
    return std::min(1.0, 2.0 * (tail + 1.0) / (r + 1.0));
}

/// Integral of exp(-huber_delta(x)) over the real line.
inline double huber_normalizer(double delta) {
    if (!positive_finite(delta)) fail_input("huber_normalizer: delta must be > 0");
    // 2 Phi(delta) - 1 == erf(delta / sqrt 2), without cancellation for small delta.
    return std::sqrt(2.0 * std::numbers::pi) * std::erf(delta / std::numbers::sqrt2) +
           2.0 * std::exp(-0.5 * delta * delta) / delta;
}

struct HuberDensityParams {
    double mu = 0.0;
    double sigma = 1.0;
    double delta = 1e-3;

    double normalizer() const { return huber_normalizer(delta); }
};

inline double huber_log_density(double x, const HuberDensityParams& p) {
    if (!positive_finite(p.sigma)) fail_input("huber_log_density: sigma must be > 0");
    return -huber(p.delta, (x - p.mu) / p.sigma) - std::log(p.normalizer()) - std::log(p.sigma);
}

inline double huber_log_likelihood(const std::vector<double>& residuals, double sigma, double delta) {
    const double log_z = std::log(huber_normalizer(delta));
    double ll = 0.0;
    for (double r : residuals) ll -= huber(delta, r / sigma);
    const double n = static_cast<double>(residuals.size());
    return ll - n * (std::log(sigma) + log_z);
}

struct SigmaProfile {
    double sigma_hat = 0.0;
    double log_likelihood = 0.0;
};

/// Maximum-likelihood scale of the Huber density for fixed residuals.
/// The score n - sum psi(r/s) r/s is increasing in s, so the root is unique.
inline SigmaProfile fit_sigma_from_residuals(const std::vector<double>& residuals, double delta) {
    if (residuals.empty()) fail_input("fit_sigma_profile: no residuals");
    double max_abs = 0.0;
    for (double r : residuals) max_abs = std::max(max_abs, std::abs(r));
    if (!(max_abs > 0.0)) fail_numerical("fit_sigma_profile: all residuals are zero (sigma -> 0)");
    const double n = static_cast<double>(residuals.size());
    auto score = [&](double log_s) {
        const double s = std::exp(log_s);
        double acc = 0.0;
        for (double r : residuals) {
            const double x = r / s;
            acc += huber_derivative(delta, x) * x;
        }
        return n - acc;
    };
    double lo = std::log(max_abs) - 1.0, hi = std::log(max_abs) + 1.0;
    while (score(lo) > 0.0) lo -= 2.0;
    while (score(hi) < 0.0) hi += 2.0;
    while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        (score(mid) < 0.0 ? lo : hi) = mid;
    }
    const double sigma = std::exp(0.5 * (lo + hi));
    return {sigma, huber_log_likelihood(residuals, sigma, delta)};
}

inline SigmaProfile fit_sigma_profile(const ScalingLawParams& params, const Dataset& data,
                                      double delta) {
    params.validate();
    const auto rep = objective_report(params.to_log(), data, delta, Aggregation::sum);
    return fit_sigma_from_residuals(rep.residuals, delta);
}

struct JointLikelihoodFit {
    LogSpaceParams params;
    double sigma = 0.0;
    double log_likelihood = 0.0;
    int iterations = 0;
    StopReason reason = StopReason::max_iterations;
};

/// Maximizes the Huber likelihood jointly over the five law parameters and
/// the scale sigma, starting from `init` and its profile sigma.
inline JointLikelihoodFit fit_joint_likelihood(const Dataset& data, const LogSpaceParams& init,
                                               double delta, int max_iterations = 5000) {
    const auto prepared = PreparedData::from(data);
    const double n = static_cast<double>(prepared.size());
    const double log_z = std::log(huber_normalizer(delta));

    const auto start = fit_sigma_from_residuals(
        objective_report(init, data, delta, Aggregation::sum).residuals, delta);

    using Vec6 = Eigen::Matrix<double, 6, 1>;
    auto nll = [&](const Vec6& x, Vec6& g) {
        const LogSpaceParams p{x[0], x[1], x[2], x[3], x[4]};
        const double inv_s = std::exp(-x[5]);
        double total = 0.0, score = 0.0;
        g.setZero();
        double w[3];
        for (std::size_t i = 0; i < prepared.size(); ++i) {
            const double r = log_sum_exp3(p.a - p.alpha * prepared.log_n[i],
                                          p.b - p.beta * prepared.log_d[i], p.e, w) -
                             prepared.log_l[i];
            const double u = r * inv_s;
            total += huber(delta, u);
            const double h = huber_derivative(delta, u);
            score += h * u;
            const double k = h * inv_s;
            g[0] += k * w[0];
            g[1] += k * w[1];
            g[2] += k * w[2];
            g[3] -= k * w[0] * prepared.log_n[i];
            g[4] -= k * w[1] * prepared.log_d[i];
        }
        g[5] = n - score;
        return total + n * (x[5] + log_z);
    };

    Vec6 x0;
    x0 << init.a, init.b, init.e, init.alpha, init.beta, std::log(start.sigma_hat);
    BfgsOptions opt;
    opt.grad_tolerance = 1e-6;
    opt.max_iterations = max_iterations;
    const auto r = minimize_bfgs<6>(nll, x0, opt);

    JointLikelihoodFit out;
    out.params = {r.x[0], r.x[1], r.x[2], r.x[3], r.x[4]};
    out.sigma = std::exp(r.x[5]);
    out.log_likelihood = -r.value;
    out.iterations = r.iterations;
    out.reason = r.reason;
    // Never report less than the starting point's likelihood.
    if (!(out.log_likelihood >= start.log_likelihood)) {
        out.params = init;
        out.sigma = start.sigma_hat;
        out.log_likelihood = start.log_likelihood;
    }
    return out;
}

inline TestReport likelihood_ratio_test(double ll_null, double ll_alt, int dof = 5) {
    if (dof < 1) fail_input("likelihood_ratio_test: dof must be >= 1");
    TestReport rep;
    rep.method = TestMethod::likelihood_ratio;
    rep.dof = dof;
    rep.clamped = ll_alt < ll_null;
    rep.statistic = rep.clamped ? 0.0 : 2.0 * (ll_alt - ll_null);
    rep.p_value = stats::chi2_sf(rep.statistic, dof);
    rep.summary = fmt::format("2 * ({:.6g} - {:.6g}) = {:.6g} on {} dof{}", ll_alt, ll_null,
                              rep.statistic, dof,
                              rep.clamped ? " (clamped: alternative below null)" : "");
    return rep;
}

/// Relative bias in the data term B / D^beta when beta_true is replaced by
/// beta_rounded: D^(beta_true - beta_rounded) - 1.
inline double rounding_bias(double beta_true, double beta_rounded, double d) {
    if (!positive_finite(d)) fail_input("rounding_bias: d must be > 0");
    return std::expm1((beta_true - beta_rounded) * std::log(d));
}

}  // namespace scalefit
