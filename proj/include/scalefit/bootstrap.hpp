#pragma once

// Nonparametric bootstrap over observations.
//
// All resample index streams are drawn from a single seeded generator before
// any fitting starts, and every resample writes into its own slot, so the
// result is identical for any worker count.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/fitter.hpp"
#include "scalefit/objective.hpp"
#include "scalefit/parallel.hpp"
#include "scalefit/random.hpp"
#include "scalefit/stats.hpp"

namespace scalefit {

struct DerivedStatistic {
    double point = 0.0;   // mean over samples
    double median = 0.0;
    double se = 0.0;      // sample standard deviation over samples
    std::map<double, double> quantiles;

    /// Central interval with the given coverage, e.g. 0.8 -> [q0.10, q0.90].
    std::pair<double, double> interval(double coverage) const {
        const double lo = 0.5 * (1.0 - coverage), hi = 1.0 - lo;
        return {level(lo), level(hi)};
    }

    /// Quantile at `q`, matching stored levels up to rounding.
    double level(double q) const {
        for (const auto& [k, v] : quantiles)
            if (std::abs(k - q) <= 1e-12) return v;
        fail_input(fmt::format("derived statistic has no quantile at level {}", q));
    }
};

inline const std::vector<double> default_quantile_levels{0.05, 0.1, 0.5, 0.9, 0.95};

/// Applies `map` to each row (a log-space parameter vector) and summarizes.
inline DerivedStatistic derived_statistic(const Eigen::MatrixXd& samples,
                                          const std::function<double(const LogSpaceParams&)>& map,
                                          const std::vector<double>& levels = default_quantile_levels) {
    if (samples.rows() < 2) fail_input("derived_statistic: need at least two samples");
    std::vector<double> values;
    values.reserve(static_cast<std::size_t>(samples.rows()));
    for (Eigen::Index r = 0; r < samples.rows(); ++r)
        values.push_back(map(LogSpaceParams::from_vector(samples.row(r).transpose())));
    DerivedStatistic out;
    out.point = stats::mean(values);
    out.se = stats::sample_sd(values);
    std::sort(values.begin(), values.end());
    out.median = stats::quantile_sorted(values, 0.5);
    for (double q : levels) out.quantiles[q] = stats::quantile_sorted(values, q);
    return out;
}

inline double policy_a(const LogSpaceParams& p) { return p.beta / (p.alpha + p.beta); }

struct SampleFactor {
    double current_width = 0.0;
    double factor = 0.0;
    double implied_runs = 0.0;
};

/// How many times more observations shrink an interval of `current_width`
/// to `target_width`, given standard errors that scale as 1/sqrt(n).
inline SampleFactor required_sample_factor_from_width(double current_width, double target_width,
                                                      std::size_t n) {
    if (!positive_finite(current_width) || !positive_finite(target_width))
        fail_input("required_sample_factor: widths must be positive");
    const double ratio = current_width / target_width;
    return {current_width, ratio * ratio, static_cast<double>(n) * ratio * ratio};
}

/// Same, starting from a standard error and a two-sided normal interval
/// with the given coverage (0.8 -> width = 2 * z_0.9 * se).
inline SampleFactor required_sample_factor(double current_se, double target_width,
                                           double coverage, std::size_t n) {
    if (!positive_finite(current_se)) fail_input("required_sample_factor: se must be positive");
    if (!(coverage > 0.0 && coverage < 1.0)) fail_input("required_sample_factor: coverage in (0,1)");
    const double z = stats::normal_quantile(0.5 + 0.5 * coverage);
    return required_sample_factor_from_width(2.0 * z * current_se, target_width, n);
}

struct BootstrapResult {
    Eigen::MatrixXd samples;                  // one log-space vector per kept resample
    std::vector<std::size_t> sample_ids;      // resample index for each row
    Mat5 covariance = Mat5::Zero();
    Vec5 standard_errors = Vec5::Zero();
    DerivedStatistic a_policy;
    std::uint64_t seed = 0;
    std::size_t resamples = 0;
    std::size_t resample_size = 0;
    std::size_t grid_fallbacks = 0;           // warm start failed, full grid used
    std::vector<std::size_t> excluded;        // resamples that never converged
    LogSpaceParams warm_start;
};

/// Index streams for every resample, drawn sequentially from one generator.
inline std::vector<std::vector<std::size_t>> resample_indices(std::size_t n, std::size_t resamples,
                                                              std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<std::size_t>> out(resamples, std::vector<std::size_t>(n));
    for (auto& stream : out)
        for (auto& i : stream) i = static_cast<std::size_t>(uniform_index(rng, n));
    return out;
}

inline BootstrapResult bootstrap_fit(const Dataset& data, const FitConfig& config,
                                     std::size_t resamples, std::uint64_t seed,
                                     std::optional<LogSpaceParams> warm_start = std::nullopt) {
    config.validate();
    if (data.empty()) fail_input("bootstrap: dataset is empty");
    if (resamples < 2) fail_input("bootstrap: need at least two resamples");
    const auto prepared = PreparedData::from(data);
    if (!warm_start) warm_start = fit_from_starts(default_grid(config.init_grid), prepared, config).best;

    BootstrapResult res;
    res.seed = seed;
    res.resamples = resamples;
    res.resample_size = prepared.size();
    res.warm_start = *warm_start;

    const auto streams = resample_indices(prepared.size(), resamples, seed);
    struct Slot {
        LogSpaceParams params;
        bool ok = false;
        bool fallback = false;
    };
    std::vector<Slot> slots(resamples);

    FitConfig inner = config;
    inner.workers = 1;
    const auto grid = default_grid(config.init_grid);
    parallel_for(resamples, config.workers, [&](std::size_t r) {
        const auto sub = prepared.select(streams[r]);
        auto single = fit_single(*warm_start, sub, inner);
        if (single.converged) {
            slots[r] = {single.final, true, false};
            return;
        }
        try {
            slots[r] = {fit_from_starts(grid, sub, inner).best, true, true};
        } catch (const Error&) {
            slots[r] = {single.final, false, true};
        }
    });

    std::size_t kept = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
        if (slots[r].fallback) ++res.grid_fallbacks;
        if (slots[r].ok) ++kept; else res.excluded.push_back(r);
    }
    if (static_cast<double>(res.excluded.size()) > 0.01 * static_cast<double>(resamples))
        fail_numerical(fmt::format("bootstrap: {} of {} resamples failed to converge (limit 1%)",
                                   res.excluded.size(), resamples));
    if (kept < 2) fail_numerical("bootstrap: fewer than two converged resamples");

    res.samples.resize(static_cast<Eigen::Index>(kept), 5);
    Eigen::Index row = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
        if (!slots[r].ok) continue;
        res.samples.row(row++) = slots[r].params.to_vector().transpose();
        res.sample_ids.push_back(r);
    }
    res.covariance = stats::sample_covariance(res.samples);
    res.standard_errors = res.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    res.a_policy = derived_statistic(res.samples, policy_a);
    return res;
}

/// Bootstrap standard errors of the natural parameters (E, A, B, alpha, beta).
inline std::array<DerivedStatistic, 5> natural_parameter_statistics(const Eigen::MatrixXd& samples) {
    return {derived_statistic(samples, [](const LogSpaceParams& p) { return std::exp(p.e); }),
            derived_statistic(samples, [](const LogSpaceParams& p) { return std::exp(p.a); }),
            derived_statistic(samples, [](const LogSpaceParams& p) { return std::exp(p.b); }),
            derived_statistic(samples, [](const LogSpaceParams& p) { return p.alpha; }),
            derived_statistic(samples, [](const LogSpaceParams& p) { return p.beta; })};
}

}  // namespace scalefit
