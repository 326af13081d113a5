#pragma once

// Dense BFGS with a Wolfe line search (bracketing + zoom with safeguarded
// cubic interpolation). Intended for small dimensions where the full
// inverse-Hessian approximation is cheap.
//
// Close to a minimizer the Armijo decrease falls below the rounding error of
// the objective. The line search then also accepts approximate-Wolfe points:
// objective within `value_noise` (relative) of the start and a slope that
// satisfies the curvature bound. This is what allows gradient tolerances far
// below sqrt(eps) * |f|.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Core>

namespace scalefit {

enum class StopReason {
    gradient,            // infinity norm of the gradient below tolerance
    objective_change,    // relative decrease below tolerance for several iterations
    loss_change,         // absolute decrease below the fixed threshold
    max_iterations,
    line_search_failed,
    non_finite,          // objective or gradient not finite at the start point
};

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::gradient: return "gradient";
        case StopReason::objective_change: return "objective_change";
        case StopReason::loss_change: return "loss_change";
        case StopReason::max_iterations: return "max_iterations";
        case StopReason::line_search_failed: return "line_search_failed";
        case StopReason::non_finite: return "non_finite";
    }
    return "unknown";
}

struct BfgsOptions {
    double grad_tolerance = 1e-8;
    double objective_rel_tolerance = 1e-12;
    // Consecutive iterations the relative decrease must stay below
    // objective_rel_tolerance before the secondary stop fires.
    int stall_iterations = 10;
    double loss_change_tolerance = 0.0;
    int max_iterations = 2000;
    int max_line_search_evals = 60;
    double c1 = 1e-4;
    double c2 = 0.9;
    double value_noise = 1e-13;
    bool record_trace = false;
};

template <int N>
struct BfgsResult {
    using Vector = Eigen::Matrix<double, N, 1>;
    Vector x;
    Vector grad;
    double value = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int evaluations = 0;
    StopReason reason = StopReason::max_iterations;
    std::vector<double> trace;  // objective at x0 and after each accepted step

    double grad_norm_inf() const { return grad.template lpNorm<Eigen::Infinity>(); }
};

namespace detail {

// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db); NaN when
// the interpolant has no real minimizer.
inline double cubic_min(double a, double fa, double da, double b, double fb, double db) {
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

struct LinePoint {
    double t = 0.0;
    double f = 0.0;
    double d = 0.0;  // directional derivative
};

// phi(t) -> LinePoint. Returns the accepted point, or t = 0 on failure.
template <class Phi>
LinePoint wolfe_search(Phi&& phi, const LinePoint& start, double t_init, const BfgsOptions& opt) {
    const double f0 = start.f, d0 = start.d;
    const double noise = opt.value_noise * std::abs(f0);

    auto armijo = [&](const LinePoint& p) { return p.f <= f0 + opt.c1 * p.t * d0; };
    auto strong_curv = [&](const LinePoint& p) { return std::abs(p.d) <= -opt.c2 * d0; };
    auto approx_wolfe = [&](const LinePoint& p) {
        return p.f <= f0 + noise && p.d >= opt.c2 * d0 && p.d <= (2.0 * opt.c1 - 1.0) * d0;
    };
    auto acceptable = [&](const LinePoint& p) {
        return (armijo(p) && strong_curv(p)) || approx_wolfe(p);
    };

    int evals = 0;
    LinePoint prev = start;
    LinePoint lo, hi;
    bool bracketed = false;
    double t = t_init;
    while (evals < opt.max_line_search_evals) {
        const LinePoint p = phi(t);
        ++evals;
        if (std::isfinite(p.f) && acceptable(p)) return p;
        if (!std::isfinite(p.f) || (!armijo(p) && p.f > f0 + noise) ||
            (evals > 1 && p.f > prev.f + noise)) {
            lo = prev;
            hi = p;
            bracketed = true;
            break;
        }
        if (p.d >= 0.0) {
            lo = p;
            hi = prev;
            bracketed = true;
            break;
        }
        prev = p;
        t *= 4.0;
    }
    if (!bracketed) return prev.t > 0.0 && prev.f <= f0 ? prev : LinePoint{};

    LinePoint best = (lo.t > 0.0 && lo.f <= f0) ? lo : LinePoint{};
    while (evals < opt.max_line_search_evals) {
        const double width = hi.t - lo.t;
        if (std::abs(width) <= 1e-16 * std::max(1.0, std::abs(lo.t))) break;
        double trial = std::numeric_limits<double>::quiet_NaN();
        if (std::isfinite(hi.f)) trial = cubic_min(lo.t, lo.f, lo.d, hi.t, hi.f, hi.d);
        const double lb = std::min(lo.t, hi.t) + 0.1 * std::abs(width);
        const double ub = std::max(lo.t, hi.t) - 0.1 * std::abs(width);
        if (!std::isfinite(trial) || trial < lb || trial > ub) trial = 0.5 * (lo.t + hi.t);
        const LinePoint p = phi(trial);
        ++evals;
        if (std::isfinite(p.f) && acceptable(p)) return p;
        if (!std::isfinite(p.f) || (!armijo(p) && p.f > f0 + noise) || p.f > lo.f + noise) {
            hi = p;
        } else {
            if (p.f < f0 && (best.t == 0.0 || p.f < best.f)) best = p;
            if (p.d * (hi.t - lo.t) >= 0.0) hi = lo;
            lo = p;
        }
    }
    // Fall back to a strict decrease even without the curvature condition.
    return best;
}

}  // namespace detail

/// `f(x, grad)` returns the objective and writes the gradient.
template <int N, class F>
BfgsResult<N> minimize_bfgs(F&& f, const Eigen::Matrix<double, N, 1>& x0,
                            const BfgsOptions& opt = {}) {
    using Vector = Eigen::Matrix<double, N, 1>;
    using Matrix = Eigen::Matrix<double, N, N>;

    BfgsResult<N> res;
    res.x = x0;
    res.grad = Vector::Zero(x0.size());
    res.value = f(res.x, res.grad);
    res.evaluations = 1;
    if (opt.record_trace) res.trace.push_back(res.value);
    if (!std::isfinite(res.value) || !res.grad.allFinite()) {
        res.reason = StopReason::non_finite;
        return res;
    }

    const Eigen::Index n = x0.size();
    Matrix H = Matrix::Identity(n, n);
    bool fresh_h = true;
    int stalled = 0;

    Vector x = res.x, g = res.grad;
    double fx = res.value;
    Vector x_try(n), g_try(n), x_new(n), g_new(n);

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it;
        if (g.template lpNorm<Eigen::Infinity>() <= opt.grad_tolerance) {
            res.reason = StopReason::gradient;
            return res;
        }

        Vector p = -H * g;
        double d0 = g.dot(p);
        if (!(d0 < 0.0)) {
            H.setIdentity();
            fresh_h = true;
            p = -g;
            d0 = g.dot(p);
        }

        double last_t = -1.0;
        auto phi = [&](double t) {
            x_try = x + t * p;
            detail::LinePoint lp{t, f(x_try, g_try), 0.0};
            ++res.evaluations;
            lp.d = g_try.dot(p);
            if (!std::isfinite(lp.f) || !g_try.allFinite())
                lp.f = std::numeric_limits<double>::infinity();
            last_t = t;
            return lp;
        };
        const double t0 = fresh_h ? std::min(1.0, 1.0 / p.template lpNorm<Eigen::Infinity>()) : 1.0;
        const auto accepted = detail::wolfe_search(phi, {0.0, fx, d0}, t0, opt);

        if (accepted.t <= 0.0) {
            if (!fresh_h) {
                H.setIdentity();
                fresh_h = true;
                continue;
            }
            res.reason = StopReason::line_search_failed;
            return res;
        }
        if (last_t == accepted.t) {
            x_new = x_try;
            g_new = g_try;
        } else {
            x_new = x + accepted.t * p;
            f(x_new, g_new);
            ++res.evaluations;
        }

        const Vector s = x_new - x;
        const Vector y = g_new - g;
        const double f_old = fx;
        x = x_new;
        g = g_new;
        fx = accepted.f;
        res.x = x;
        res.grad = g;
        res.value = fx;
        res.iterations = it + 1;
        if (opt.record_trace) res.trace.push_back(fx);

        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            if (fresh_h) {
                H = Matrix::Identity(n, n) * (sy / y.squaredNorm());
                fresh_h = false;
            }
            const double rho = 1.0 / sy;
            const Vector hy = H * y;
            const double yhy = y.dot(hy);
            H += ((sy + yhy) * rho * rho) * (s * s.transpose()) -
                 rho * (hy * s.transpose() + s * hy.transpose());
        }

        const double decrease = f_old - fx;
        if (g.template lpNorm<Eigen::Infinity>() <= opt.grad_tolerance) {
            res.reason = StopReason::gradient;
            return res;
        }
        if (opt.loss_change_tolerance > 0.0 && decrease < opt.loss_change_tolerance) {
            res.reason = StopReason::loss_change;
            return res;
        }
        if (decrease <= opt.objective_rel_tolerance * std::abs(f_old)) {
            if (++stalled >= opt.stall_iterations) {
                res.reason = StopReason::objective_change;
                return res;
            }
        } else {
            stalled = 0;
        }
    }
    res.iterations = opt.max_iterations;
    res.reason = StopReason::max_iterations;
    return res;
}

}  // namespace scalefit
