#pragma once

// JSON and CSV forms of configs, fits, bootstrap runs and test reports, plus
// content hashing for the run manifest.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "scalefit/bootstrap.hpp"
#include "scalefit/core.hpp"
#include "scalefit/dataset_io.hpp"
#include "scalefit/fitter.hpp"
#include "scalefit/hypothesis.hpp"
#include "scalefit/policy.hpp"

namespace scalefit {

using json = nlohmann::json;

inline constexpr const char* tool_version = "1.0.0";

inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr))
        fail_numerical("sha256: digest failed");
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(detail::read_file(path)); }

inline json load_json_file(const std::string& path) {
    const auto text = detail::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& ex) {
        fail_input(fmt::format("{}: invalid JSON: {}", path, ex.what()));
    }
}

inline void save_json_file(const json& j, const std::string& path) { detail::write_file(path, j.dump(2) + "\n"); }

// ---- configuration --------------------------------------------------------

inline json init_grid_to_json(const InitGrid& g) {
    return {{"a", g.a}, {"b", g.b}, {"e", g.e}, {"alpha", g.alpha}, {"beta", g.beta}};
}

inline InitGrid init_grid_from_json(const json& j) {
    InitGrid g;
    if (j.contains("a")) g.a = j.at("a").get<std::vector<double>>();
    if (j.contains("b")) g.b = j.at("b").get<std::vector<double>>();
    if (j.contains("e")) g.e = j.at("e").get<std::vector<double>>();
    if (j.contains("alpha")) g.alpha = j.at("alpha").get<std::vector<double>>();
    if (j.contains("beta")) g.beta = j.at("beta").get<std::vector<double>>();
    return g;
}

inline json fit_config_to_json(const FitConfig& c) {
    return {{"delta", c.delta},
            {"aggregation", to_string(c.aggregation)},
            {"grad_tolerance", c.grad_tolerance},
            {"objective_rel_tolerance", c.objective_rel_tolerance},
            {"loss_change_tolerance", c.loss_change_tolerance},
            {"max_iterations", c.max_iterations},
            {"drop_outliers", c.drop_outliers},
            {"outlier_ratio_threshold", c.outlier_ratio_threshold},
            {"flop_multiplier", c.flop_multiplier},
            {"init_grid", init_grid_to_json(c.init_grid)}};
}

inline FitConfig fit_config_from_json(const json& j, FitConfig c = {}) {
    try {
        c.delta = j.value("delta", c.delta);
        if (j.contains("aggregation")) c.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
        c.grad_tolerance = j.value("grad_tolerance", c.grad_tolerance);
        c.objective_rel_tolerance = j.value("objective_rel_tolerance", c.objective_rel_tolerance);
        c.loss_change_tolerance = j.value("loss_change_tolerance", c.loss_change_tolerance);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.drop_outliers = j.value("drop_outliers", c.drop_outliers);
        c.outlier_ratio_threshold = j.value("outlier_ratio_threshold", c.outlier_ratio_threshold);
        c.flop_multiplier = j.value("flop_multiplier", c.flop_multiplier);
        if (j.contains("init_grid")) c.init_grid = init_grid_from_json(j.at("init_grid"));
    } catch (const json::exception& ex) {
        fail_input(std::string("fit config: ") + ex.what());
    }
    c.validate();
    return c;
}

struct PolicyOptions {
    double compute_min = 1e18;
    double compute_max = 1e28;
    std::size_t points = 40;
    double coverage = 0.8;
};

struct RunConfig {
    std::uint64_t seed = 20240418;
    unsigned workers = 0;
    FitConfig fit;
    std::size_t resamples = 4000;
    PolicyOptions policy;
    json extract = json::object();
    json pipeline = json::object();
};

inline RunConfig run_config_from_json(const json& j) {
    RunConfig rc;
    try {
        rc.seed = j.value("seed", rc.seed);
        rc.workers = j.value("workers", rc.workers);
        if (j.contains("fit")) rc.fit = fit_config_from_json(j.at("fit"));
        if (j.contains("bootstrap")) rc.resamples = j.at("bootstrap").value("resamples", rc.resamples);
        if (j.contains("policy")) {
            const auto& p = j.at("policy");
            rc.policy.compute_min = p.value("compute_min", rc.policy.compute_min);
            rc.policy.compute_max = p.value("compute_max", rc.policy.compute_max);
            rc.policy.points = p.value("points", rc.policy.points);
            rc.policy.coverage = p.value("coverage", rc.policy.coverage);
        }
        if (j.contains("extract")) rc.extract = j.at("extract");
        if (j.contains("pipeline")) rc.pipeline = j.at("pipeline");
    } catch (const json::exception& ex) {
        fail_input(std::string("config: ") + ex.what());
    }
    rc.fit.workers = rc.workers;
    return rc;
}

inline json run_config_to_json(const RunConfig& rc) {
    return {{"seed", rc.seed},
            {"workers", rc.workers},
            {"fit", fit_config_to_json(rc.fit)},
            {"bootstrap", {{"resamples", rc.resamples}}},
            {"policy",
             {{"compute_min", rc.policy.compute_min},
              {"compute_max", rc.policy.compute_max},
              {"points", rc.policy.points},
              {"coverage", rc.policy.coverage}}},
            {"extract", rc.extract},
            {"pipeline", rc.pipeline}};
}

// ---- parameters and fits ---------------------------------------------------

inline json log_params_to_json(const LogSpaceParams& p) {
    return {{"a", p.a}, {"b", p.b}, {"e", p.e}, {"alpha", p.alpha}, {"beta", p.beta}};
}

inline json natural_params_to_json(const ScalingLawParams& p) {
    return {{"E", p.E}, {"A", p.A}, {"B", p.B}, {"alpha", p.alpha}, {"beta", p.beta}};
}

/// Accepts {"log_params": {...}}, {"params": {E, A, B, alpha, beta}} or a
/// bare object of either form.
inline LogSpaceParams params_from_json(const json& j) {
    try {
        if (j.contains("log_params")) return params_from_json(j.at("log_params"));
        if (j.contains("params")) return params_from_json(j.at("params"));
        if (j.contains("a"))
            return {j.at("a").get<double>(), j.at("b").get<double>(), j.at("e").get<double>(),
                    j.at("alpha").get<double>(), j.at("beta").get<double>()};
        const ScalingLawParams p{j.at("E").get<double>(), j.at("A").get<double>(), j.at("B").get<double>(),
                                 j.at("alpha").get<double>(), j.at("beta").get<double>()};
        p.validate();
        return p.to_log();
    } catch (const json::exception& ex) {
        fail_input(std::string("parameters: ") + ex.what());
    }
}

/// Named reference parameter sets, or a path to a fit/params JSON file.
inline LogSpaceParams resolve_params(const std::string& spec) {
    if (spec == "hoffmann" || spec == "hoffmann_unrounded") return reference::hoffmann_unrounded.to_log();
    if (spec == "hoffmann_rounded") return reference::hoffmann_rounded.to_log();
    if (spec == "published" || spec == "published_no_outliers") return reference::refit_no_outliers.to_log();
    if (spec == "published_with_outliers") return reference::refit_with_outliers.to_log();
    return params_from_json(load_json_file(spec));
}

inline json fit_result_to_json(const FitResult& r) {
    const auto& best = r.grid_results[r.best_index];
    json j{{"log_params", log_params_to_json(r.best)},
           {"objective", r.best_objective},
           {"aggregation", to_string(r.config.aggregation)},
           {"n_observations", r.n_observations},
           {"starts", r.grid_results.size()},
           {"converged_starts", r.n_converged},
           {"non_finite_starts", r.n_non_finite},
           {"best_start", r.best_index},
           {"best_start_init", log_params_to_json(best.init)},
           {"iterations", best.iterations},
           {"grad_norm", best.grad_norm},
           {"stop_reason", to_string(best.reason)},
           {"degenerate", r.degenerate},
           {"config", fit_config_to_json(r.config)}};
    if (!r.degenerate) {
        j["params"] = natural_params_to_json(r.best_natural);
        const auto pe = policy_exponents(r.best.alpha, r.best.beta);
        j["a_policy"] = pe.a_policy;
        j["b_policy"] = pe.b_policy;
    } else {
        j["params"] = nullptr;
    }
    return j;
}

inline std::string grid_results_csv(const FitResult& r) {
    std::string out = "start,init_a,init_b,init_e,init_alpha,init_beta,a,b,e,alpha,beta,objective,grad_norm,"
                      "converged,iterations,stop_reason\n";
    for (std::size_t i = 0; i < r.grid_results.size(); ++i) {
        const auto& s = r.grid_results[i];
        out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", i, s.init.a, s.init.b, s.init.e,
                           s.init.alpha, s.init.beta, s.final.a, s.final.b, s.final.e, s.final.alpha, s.final.beta,
                           s.objective, s.grad_norm, s.converged ? 1 : 0, s.iterations, to_string(s.reason));
    }
    return out;
}

// ---- bootstrap ---------------------------------------------------------------

inline json derived_statistic_to_json(const DerivedStatistic& d) {
    json q = json::object();
    for (const auto& [level, v] : d.quantiles) q[fmt::format("{}", level)] = v;
    return {{"mean", d.point}, {"median", d.median}, {"se", d.se}, {"quantiles", q}};
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
        rows.push_back(row);
    }
    return rows;
}

inline Mat5 mat5_from_json(const json& j) {
    Mat5 m;
    if (j.size() != 5) fail_input("covariance must be 5x5");
    for (int i = 0; i < 5; ++i) {
        if (j[i].size() != 5) fail_input("covariance must be 5x5");
        for (int k = 0; k < 5; ++k) m(i, k) = j[i][k].get<double>();
    }
    return m;
}

inline json bootstrap_to_json(const BootstrapResult& b) {
    json se = json::object();
    for (int i = 0; i < 5; ++i) se[log_param_names[i]] = b.standard_errors[i];
    const auto nat = natural_parameter_statistics(b.samples);
    static constexpr std::array<const char*, 5> nat_names{"E", "A", "B", "alpha", "beta"};
    json natural = json::object();
    for (int i = 0; i < 5; ++i) natural[nat_names[i]] = derived_statistic_to_json(nat[i]);
    return {{"seed", b.seed},
            {"resamples", b.resamples},
            {"kept", b.samples.rows()},
            {"resample_size", b.resample_size},
            {"grid_fallbacks", b.grid_fallbacks},
            {"excluded", b.excluded},
            {"warm_start", log_params_to_json(b.warm_start)},
            {"parameter_order", log_param_names},
            {"covariance", matrix_to_json(b.covariance)},
            {"standard_errors", se},
            {"a_policy", derived_statistic_to_json(b.a_policy)},
            {"natural", natural}};
}

inline std::string bootstrap_samples_csv(const BootstrapResult& b) {
    std::string out = "resample,a,b,e,alpha,beta\n";
    for (Eigen::Index r = 0; r < b.samples.rows(); ++r)
        out += fmt::format("{},{},{},{},{},{}\n", b.sample_ids[static_cast<std::size_t>(r)], b.samples(r, 0),
                           b.samples(r, 1), b.samples(r, 2), b.samples(r, 3), b.samples(r, 4));
    return out;
}

inline Eigen::MatrixXd bootstrap_samples_from_csv(std::string_view text) {
    std::vector<std::array<double, 5>> rows;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != 6) fail_input("bootstrap samples: expected 6 columns per row");
        std::array<double, 5> v{};
        for (int i = 0; i < 5; ++i) v[i] = detail::parse_double(cells[i + 1], "bootstrap sample");
        rows.push_back(v);
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), 5);
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (int i = 0; i < 5; ++i) m(static_cast<Eigen::Index>(r), i) = rows[r][i];
    return m;
}

// ---- tests -------------------------------------------------------------------

inline json test_report_to_json(const TestReport& t) {
    json j{{"method", to_string(t.method)},
           {"statistic", t.statistic},
           {"dof", t.dof},
           {"p_value", t.p_value},
           {"summary", t.summary}};
    if (t.method == TestMethod::chi2_equality) j["condition_number"] = t.condition_number;
    if (t.method == TestMethod::likelihood_ratio) j["clamped"] = t.clamped;
    return j;
}

}  // namespace scalefit
