#pragma once

// Domain types and the scaling-law primitives shared by every module:
//
//     L(N, D) = E + A / N^alpha + B / D^beta
//
// Parameters live in two coordinate systems. ScalingLawParams holds the
// natural values; LogSpaceParams holds (log A, log B, log E, alpha, beta),
// which is the optimization and bootstrap coordinate system.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace scalefit {

enum class ErrorKind { bad_input, numerical, missing_artifact };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail_input(const std::string& what) {
    throw Error(ErrorKind::bad_input, what);
}

[[noreturn]] inline void fail_numerical(const std::string& what) {
    throw Error(ErrorKind::numerical, what);
}

[[noreturn]] inline void fail_missing(const std::string& what) {
    throw Error(ErrorKind::missing_artifact, what);
}

inline bool positive_finite(double x) { return std::isfinite(x) && x > 0.0; }

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;

/// Index of each coordinate in a log-space parameter vector.
enum ParamIndex : int { idx_a = 0, idx_b = 1, idx_e = 2, idx_alpha = 3, idx_beta = 4 };

inline constexpr std::array<const char*, 5> log_param_names{"log_A", "log_B", "log_E", "alpha", "beta"};

struct LogSpaceParams;

struct ScalingLawParams {
    double E = 0.0;
    double A = 0.0;
    double B = 0.0;
    double alpha = 0.0;
    double beta = 0.0;

    bool valid() const {
        return positive_finite(E) && positive_finite(A) && positive_finite(B) &&
               positive_finite(alpha) && positive_finite(beta);
    }

    void validate() const {
        if (!valid()) fail_input("scaling-law parameters must all be positive and finite");
    }

    LogSpaceParams to_log() const;

    friend bool operator==(const ScalingLawParams&, const ScalingLawParams&) = default;
};

struct LogSpaceParams {
    double a = 0.0;  // log A
    double b = 0.0;  // log B
    double e = 0.0;  // log E
    double alpha = 0.0;
    double beta = 0.0;

    Vec5 to_vector() const { return Vec5{a, b, e, alpha, beta}; }

    static LogSpaceParams from_vector(const Vec5& v) {
        return LogSpaceParams{v[idx_a], v[idx_b], v[idx_e], v[idx_alpha], v[idx_beta]};
    }

    ScalingLawParams to_natural() const {
        return ScalingLawParams{std::exp(e), std::exp(a), std::exp(b), alpha, beta};
    }

    bool finite() const { return to_vector().allFinite(); }

    /// Exponents at or below zero make the law non-decreasing in N or D.
    bool degenerate() const { return !(alpha > 0.0 && beta > 0.0); }

    friend bool operator==(const LogSpaceParams&, const LogSpaceParams&) = default;
};

inline LogSpaceParams ScalingLawParams::to_log() const {
    return LogSpaceParams{std::log(A), std::log(B), std::log(E), alpha, beta};
}

/// Reference parameter sets used for comparisons.
namespace reference {
inline constexpr ScalingLawParams hoffmann_unrounded{1.6934, 406.4, 410.7, 0.3392, 0.2849};
inline constexpr ScalingLawParams hoffmann_rounded{1.69, 406.4, 410.7, 0.34, 0.28};
inline constexpr ScalingLawParams refit_no_outliers{1.8172, 482.01, 2085.43, 0.3478, 0.3658};
inline constexpr ScalingLawParams refit_with_outliers{1.89, 463.3, 12530.0, 0.345, 0.452};
}  // namespace reference

inline constexpr double default_flop_multiplier = 6.0;

inline double predict_loss(const ScalingLawParams& p, double n, double d) {
    if (!positive_finite(n) || !positive_finite(d))
        fail_input("predict_loss: n and d must be positive and finite");
    return p.E + p.A * std::pow(n, -p.alpha) + p.B * std::pow(d, -p.beta);
}

/// Training tokens implied by the compute rule C = multiplier * N * D.
inline double tokens_from_flop(double flop, double n_params,
                               double multiplier = default_flop_multiplier) {
    if (!positive_finite(flop) || !positive_finite(n_params) || !positive_finite(multiplier))
        fail_input("tokens_from_flop: flop, n_params and multiplier must be positive");
    return flop / (multiplier * n_params);
}

struct RunObservation {
    std::string source_id;
    double n_params = 0.0;
    double flop = 0.0;
    double tokens = 0.0;
    double loss = 0.0;

    bool valid() const {
        return positive_finite(n_params) && positive_finite(flop) && positive_finite(tokens) &&
               positive_finite(loss);
    }

    double tokens_per_param() const { return tokens / n_params; }

    static RunObservation from_flop(std::string id, double n_params, double flop, double loss,
                                    double multiplier = default_flop_multiplier) {
        return RunObservation{std::move(id), n_params, flop,
                              tokens_from_flop(flop, n_params, multiplier), loss};
    }
};

struct Dataset {
    std::vector<RunObservation> observations;
    std::string provenance;

    std::size_t size() const { return observations.size(); }
    bool empty() const { return observations.empty(); }

    void validate() const {
        for (const auto& obs : observations) {
            if (!obs.valid())
                fail_input("observation '" + obs.source_id +
                           "' has a non-positive or non-finite field");
        }
    }
};

enum class Aggregation { sum, mean };

inline const char* to_string(Aggregation a) { return a == Aggregation::sum ? "sum" : "mean"; }

inline Aggregation aggregation_from_string(const std::string& s) {
    if (s == "sum") return Aggregation::sum;
    if (s == "mean") return Aggregation::mean;
    fail_input("unknown aggregation '" + s + "' (expected sum or mean)");
}

/// Per-coordinate initial values; the multistart grid is their Cartesian product.
struct InitGrid {
    std::vector<double> a{0, 5, 10, 15, 20, 25};
    std::vector<double> b{0, 5, 10, 15, 20, 25};
    std::vector<double> e{-1, -0.5, 0, 0.5, 1};
    std::vector<double> alpha{0, 0.5, 1, 1.5, 2};
    std::vector<double> beta{0, 0.5, 1, 1.5, 2};

    std::size_t size() const { return a.size() * b.size() * e.size() * alpha.size() * beta.size(); }
};

struct FitConfig {
    double delta = 1e-3;
    InitGrid init_grid;
    Aggregation aggregation = Aggregation::sum;
    double grad_tolerance = 1e-8;             // infinity norm
    double objective_rel_tolerance = 1e-12;   // secondary stop
    // Absolute per-iteration decrease below which the optimizer stops.
    // Zero disables it. A fixed value here, combined with mean aggregation,
    // reproduces premature termination.
    double loss_change_tolerance = 0.0;
    int max_iterations = 2000;
    bool drop_outliers = true;
    double outlier_ratio_threshold = 0.4;     // tokens / n_params
    double flop_multiplier = default_flop_multiplier;
    unsigned workers = 0;                     // 0: hardware concurrency

    void validate() const {
        if (!positive_finite(delta)) fail_input("FitConfig: delta must be > 0");
        if (!positive_finite(grad_tolerance)) fail_input("FitConfig: grad_tolerance must be > 0");
        if (max_iterations < 1) fail_input("FitConfig: max_iterations must be >= 1");
        if (!(objective_rel_tolerance >= 0.0) || !(loss_change_tolerance >= 0.0))
            fail_input("FitConfig: tolerances must be non-negative");
        if (init_grid.size() == 0) fail_input("FitConfig: init_grid is empty in some coordinate");
        if (!positive_finite(flop_multiplier)) fail_input("FitConfig: flop_multiplier must be > 0");
    }
};

}  // namespace scalefit
