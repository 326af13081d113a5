#pragma once

// Multistart quasi-Newton fit of the scaling law.
//
// Every start in the initialization grid is minimized to convergence; the
// best converged optimum wins. The reduction compares by objective and then
// by lexicographic parameter vector, so the answer does not depend on how
// starts are scheduled across threads.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/bfgs.hpp"
#include "scalefit/core.hpp"
#include "scalefit/objective.hpp"
#include "scalefit/parallel.hpp"

namespace scalefit {

/// Cartesian product of the grid, `a` varying slowest and `beta` fastest.
inline std::vector<LogSpaceParams> default_grid(const InitGrid& grid = {}) {
    std::vector<LogSpaceParams> out;
    out.reserve(grid.size());
    for (double a : grid.a)
        for (double b : grid.b)
            for (double e : grid.e)
                for (double al : grid.alpha)
                    for (double be : grid.beta) out.push_back({a, b, e, al, be});
    return out;
}

struct SingleFit {
    LogSpaceParams init;
    LogSpaceParams final;
    double objective = std::numeric_limits<double>::infinity();
    double grad_norm = std::numeric_limits<double>::infinity();
    bool converged = false;
    int iterations = 0;
    int evaluations = 0;
    StopReason reason = StopReason::max_iterations;
    std::vector<double> trace;
};

struct FitResult {
    LogSpaceParams best;
    ScalingLawParams best_natural;
    double best_objective = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;  // position in grid_results
    bool degenerate = false;     // alpha <= 0 or beta <= 0 at the optimum
    std::size_t n_observations = 0;
    std::size_t n_converged = 0;
    std::size_t n_non_finite = 0;
    std::vector<SingleFit> grid_results;
    FitConfig config;
};

inline BfgsOptions bfgs_options(const FitConfig& config) {
    BfgsOptions o;
    o.grad_tolerance = config.grad_tolerance;
    o.objective_rel_tolerance = config.objective_rel_tolerance;
    o.loss_change_tolerance = config.loss_change_tolerance;
    o.max_iterations = config.max_iterations;
    return o;
}

inline SingleFit fit_single(const LogSpaceParams& init, const PreparedData& data,
                            const FitConfig& config, bool record_trace = false) {
    auto opts = bfgs_options(config);
    opts.record_trace = record_trace;
    auto f = [&](const Vec5& x, Vec5& g) {
        return objective_value_and_gradient(LogSpaceParams::from_vector(x), data, config.delta,
                                            config.aggregation, g);
    };
    const auto r = minimize_bfgs<5>(f, init.to_vector(), opts);

    SingleFit out;
    out.init = init;
    out.final = LogSpaceParams::from_vector(r.x);
    out.objective = r.value;
    out.grad_norm = r.grad_norm_inf();
    out.iterations = r.iterations;
    out.evaluations = r.evaluations;
    out.reason = r.reason;
    out.trace = r.trace;
    // A stop on the configured absolute loss-change rule is the caller's own
    // termination criterion, so it counts as converged under that rule.
    out.converged = std::isfinite(r.value) &&
                    (out.grad_norm <= config.grad_tolerance || r.reason == StopReason::loss_change);
    return out;
}

inline SingleFit fit_single(const LogSpaceParams& init, const Dataset& data,
                            const FitConfig& config) {
    return fit_single(init, PreparedData::from(data), config);
}

namespace detail {

inline bool lex_less(const LogSpaceParams& x, const LogSpaceParams& y) {
    const Vec5 u = x.to_vector(), v = y.to_vector();
    return std::lexicographical_compare(u.begin(), u.end(), v.begin(), v.end());
}

/// Index of the best converged run; ties within `rel_tie` resolve to the
/// lexicographically smallest parameter vector. Returns size() when none.
inline std::size_t select_best(const std::vector<SingleFit>& runs, double rel_tie = 1e-10) {
    double min_obj = std::numeric_limits<double>::infinity();
    for (const auto& r : runs)
        if (r.converged && r.objective < min_obj) min_obj = r.objective;
    if (!std::isfinite(min_obj)) return runs.size();
    const double cut = min_obj + rel_tie * std::abs(min_obj);
    std::size_t best = runs.size();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        if (!r.converged || !(r.objective <= cut)) continue;
        if (best == runs.size() || lex_less(r.final, runs[best].final)) best = i;
    }
    return best;
}

}  // namespace detail

inline FitResult fit_from_starts(const std::vector<LogSpaceParams>& starts,
                                 const PreparedData& data, const FitConfig& config) {
    config.validate();
    if (data.size() == 0) fail_input("fit: dataset is empty");
    FitResult res;
    res.config = config;
    res.n_observations = data.size();
    res.grid_results.resize(starts.size());
    parallel_for(starts.size(), config.workers,
                 [&](std::size_t i) { res.grid_results[i] = fit_single(starts[i], data, config); });

    for (const auto& r : res.grid_results) {
        if (r.converged) ++res.n_converged;
        if (!std::isfinite(r.objective)) ++res.n_non_finite;
    }
    res.best_index = detail::select_best(res.grid_results);
    if (res.best_index == res.grid_results.size())
        fail_numerical(fmt::format("fit: none of {} initializations converged", starts.size()));
    const auto& best = res.grid_results[res.best_index];
    res.best = best.final;
    res.best_natural = best.final.to_natural();
    res.best_objective = best.objective;
    res.degenerate = best.final.degenerate();
    return res;
}

inline FitResult fit(const Dataset& data, const FitConfig& config) {
    return fit_from_starts(default_grid(config.init_grid), PreparedData::from(data), config);
}

}  // namespace scalefit
