#pragma once

// Robust objective for the scaling law in log space:
//
//     sum_i Huber_delta( LSE(a - alpha log N_i, b - beta log D_i, e) - log L_i )
//
// LSE(a - alpha log N, b - beta log D, e) is the log of E + A/N^alpha + B/D^beta.

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/dataset_io.hpp"

namespace scalefit {

inline double huber(double delta, double x) {
    const double ax = std::abs(x);
    return ax <= delta ? 0.5 * x * x : delta * (ax - 0.5 * delta);
}

/// d/dx huber; the quadratic branch owns the kink.
inline double huber_derivative(double delta, double x) {
    if (std::abs(x) <= delta) return x;
    return x > 0.0 ? delta : -delta;
}

inline double log_sum_exp(std::span<const double> terms) {
    if (terms.empty()) fail_input("log_sum_exp: empty input");
    if (terms.size() == 1) return terms[0];
    const double m = *std::max_element(terms.begin(), terms.end());
    if (!std::isfinite(m)) return m;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
}

/// Three-term LSE that also returns the softmax weights.
inline double log_sum_exp3(double t0, double t1, double t2, double* w = nullptr) {
    const double m = std::max({t0, t1, t2});
    const double e0 = std::exp(t0 - m), e1 = std::exp(t1 - m), e2 = std::exp(t2 - m);
    const double s = e0 + e1 + e2;
    if (w) {
        w[0] = e0 / s;
        w[1] = e1 / s;
        w[2] = e2 / s;
    }
    return m + std::log(s);
}

/// Logs of the observation columns, computed once per dataset.
struct PreparedData {
    std::vector<double> log_n;
    std::vector<double> log_d;
    std::vector<double> log_l;

    std::size_t size() const { return log_n.size(); }

    static PreparedData from(const Dataset& data) {
        if (data.empty()) fail_input("objective: dataset is empty");
        PreparedData p;
        p.log_n.reserve(data.size());
        p.log_d.reserve(data.size());
        p.log_l.reserve(data.size());
        for (const auto& o : data.observations) {
            if (!positive_finite(o.n_params) || !positive_finite(o.tokens) || !positive_finite(o.loss))
                fail_input("objective: observation '" + o.source_id +
                           "' has non-positive N, D or L");
            p.log_n.push_back(std::log(o.n_params));
            p.log_d.push_back(std::log(o.tokens));
            p.log_l.push_back(std::log(o.loss));
        }
        return p;
    }

    /// Sub-sample by position; indices may repeat.
    PreparedData select(std::span<const std::size_t> idx) const {
        PreparedData p;
        p.log_n.reserve(idx.size());
        p.log_d.reserve(idx.size());
        p.log_l.reserve(idx.size());
        for (auto i : idx) {
            p.log_n.push_back(log_n.at(i));
            p.log_d.push_back(log_d.at(i));
            p.log_l.push_back(log_l.at(i));
        }
        return p;
    }
};

inline double residual(const LogSpaceParams& p, double log_n, double log_d, double log_l) {
    return log_sum_exp3(p.a - p.alpha * log_n, p.b - p.beta * log_d, p.e) - log_l;
}

struct ResidualReport {
    std::vector<std::string> source_ids;
    std::vector<double> residuals;
    std::vector<double> huber_losses;
    double total = 0.0;
    Aggregation aggregation = Aggregation::sum;

    std::string to_csv() const {
        std::string out = "source_id,residual,huber_loss\n";
        for (std::size_t i = 0; i < residuals.size(); ++i)
            out += fmt::format("{},{},{}\n", detail::csv_quote(source_ids[i]), residuals[i],
                               huber_losses[i]);
        return out;
    }
};

namespace detail {
inline double aggregate_scale(Aggregation agg, std::size_t n) {
    return agg == Aggregation::sum ? 1.0 : 1.0 / static_cast<double>(n);
}
}  // namespace detail

/// Objective value on prepared data; non-finite if the parameters overflow.
inline double objective_value(const LogSpaceParams& p, const PreparedData& data, double delta,
                              Aggregation agg) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i)
        total += huber(delta, residual(p, data.log_n[i], data.log_d[i], data.log_l[i]));
    return total * detail::aggregate_scale(agg, data.size());
}

/// Value and analytic gradient w.r.t. (a, b, e, alpha, beta) in one pass.
inline double objective_value_and_gradient(const LogSpaceParams& p, const PreparedData& data,
                                           double delta, Aggregation agg, Vec5& grad) {
    double total = 0.0;
    grad.setZero();
    double w[3];
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double r = log_sum_exp3(p.a - p.alpha * data.log_n[i], p.b - p.beta * data.log_d[i],
                                      p.e, w) -
                         data.log_l[i];
        total += huber(delta, r);
        const double h = huber_derivative(delta, r);
        grad[idx_a] += h * w[0];
        grad[idx_b] += h * w[1];
        grad[idx_e] += h * w[2];
        grad[idx_alpha] -= h * w[0] * data.log_n[i];
        grad[idx_beta] -= h * w[1] * data.log_d[i];
    }
    const double scale = detail::aggregate_scale(agg, data.size());
    grad *= scale;
    return total * scale;
}

inline ResidualReport objective_report(const LogSpaceParams& p, const Dataset& data,
                                       double delta, Aggregation agg) {
    const auto prepared = PreparedData::from(data);
    ResidualReport rep;
    rep.aggregation = agg;
    double total = 0.0;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        const double r = residual(p, prepared.log_n[i], prepared.log_d[i], prepared.log_l[i]);
        rep.source_ids.push_back(data.observations[i].source_id);
        rep.residuals.push_back(r);
        rep.huber_losses.push_back(huber(delta, r));
        total += rep.huber_losses.back();
    }
    rep.total = total * detail::aggregate_scale(agg, prepared.size());
    return rep;
}

inline ResidualReport objective_report(const LogSpaceParams& p, const Dataset& data,
                                       const FitConfig& config) {
    return objective_report(p, data, config.delta, config.aggregation);
}

inline double objective_value(const LogSpaceParams& p, const Dataset& data,
                              const FitConfig& config) {
    return objective_value(p, PreparedData::from(data), config.delta, config.aggregation);
}

inline Vec5 objective_gradient(const LogSpaceParams& p, const Dataset& data,
                               const FitConfig& config) {
    Vec5 g;
    objective_value_and_gradient(p, PreparedData::from(data), config.delta, config.aggregation, g);
    return g;
}

}  // namespace scalefit
