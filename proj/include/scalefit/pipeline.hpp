#pragma once

// Pipeline steps. Each step reads its inputs from files, writes flat
// artifacts into the run directory and records both, with content hashes,
// in the run manifest.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/artifacts.hpp"
#include "scalefit/bootstrap.hpp"
#include "scalefit/dataset_io.hpp"
#include "scalefit/figure/extract.hpp"
#include "scalefit/fitter.hpp"
#include "scalefit/hypothesis.hpp"
#include "scalefit/outliers.hpp"
#include "scalefit/plot_svg.hpp"
#include "scalefit/policy.hpp"
#include "scalefit/stats.hpp"

namespace scalefit {

namespace fs = std::filesystem;

struct ArtifactRef {
    std::string path;    // relative to the run directory when `internal`
    std::string sha256;
    bool internal = true;
};

struct StepRecord {
    std::string name;
    std::vector<ArtifactRef> inputs;
    std::vector<ArtifactRef> outputs;
    json config = json::object();
};

struct Manifest {
    std::string tool_version = scalefit::tool_version;
    json config = json::object();
    json seeds = json::object();
    std::vector<StepRecord> steps;

    const StepRecord* step(const std::string& name) const {
        for (const auto& s : steps)
            if (s.name == name) return &s;
        return nullptr;
    }

    void upsert(StepRecord rec) {
        for (auto& s : steps)
            if (s.name == rec.name) {
                s = std::move(rec);
                return;
            }
        steps.push_back(std::move(rec));
    }
};

inline json artifact_to_json(const ArtifactRef& a) {
    return {{"path", a.path}, {"sha256", a.sha256}, {"internal", a.internal}};
}

inline ArtifactRef artifact_from_json(const json& j) {
    return {j.at("path").get<std::string>(), j.at("sha256").get<std::string>(), j.value("internal", true)};
}

inline json manifest_to_json(const Manifest& m) {
    json steps = json::array();
    for (const auto& s : m.steps) {
        json in = json::array(), out = json::array();
        for (const auto& a : s.inputs) in.push_back(artifact_to_json(a));
        for (const auto& a : s.outputs) out.push_back(artifact_to_json(a));
        steps.push_back({{"name", s.name}, {"inputs", in}, {"outputs", out}, {"config", s.config}});
    }
    return {{"tool_version", m.tool_version}, {"config", m.config}, {"seeds", m.seeds}, {"steps", steps}};
}

inline Manifest manifest_from_json(const json& j) {
    Manifest m;
    try {
        m.tool_version = j.value("tool_version", m.tool_version);
        m.config = j.value("config", json::object());
        m.seeds = j.value("seeds", json::object());
        for (const auto& s : j.at("steps")) {
            StepRecord r;
            r.name = s.at("name").get<std::string>();
            for (const auto& a : s.at("inputs")) r.inputs.push_back(artifact_from_json(a));
            for (const auto& a : s.at("outputs")) r.outputs.push_back(artifact_from_json(a));
            r.config = s.value("config", json::object());
            m.steps.push_back(std::move(r));
        }
    } catch (const json::exception& ex) {
        fail_input(std::string("manifest: ") + ex.what());
    }
    return m;
}

inline constexpr const char* manifest_file = "manifest.json";

class RunContext {
public:
    RunContext(fs::path out_dir, bool reproducible) : out_dir_(std::move(out_dir)), reproducible_(reproducible) {
        std::error_code ec;
        fs::create_directories(out_dir_, ec);
        if (ec) fail_input(fmt::format("cannot create output directory '{}': {}", out_dir_.string(), ec.message()));
        if (fs::exists(out_dir_ / manifest_file))
            manifest_ = manifest_from_json(load_json_file((out_dir_ / manifest_file).string()));
    }

    const fs::path& out_dir() const { return out_dir_; }
    bool reproducible() const { return reproducible_; }
    Manifest& manifest() { return manifest_; }
    const Manifest& manifest() const { return manifest_; }

    fs::path path(const std::string& name) const { return out_dir_ / name; }

    ArtifactRef write(const std::string& name, const std::string& content) const {
        detail::write_file(path(name).string(), content);
        return {name, sha256_hex(content), true};
    }

    ArtifactRef write_json(const std::string& name, const json& j) const { return write(name, j.dump(2) + "\n"); }

    /// A file produced by an earlier step when it lives in the run
    /// directory, otherwise an external input referenced by its given path.
    ArtifactRef input(const std::string& given) const {
        const fs::path p(given);
        if (p.is_relative() && fs::exists(out_dir_ / p)) return {given, sha256_file((out_dir_ / p).string()), true};
        if (!fs::exists(p)) fail_missing(fmt::format("input '{}' does not exist", given));
        std::error_code ec;
        const auto canon_out = fs::weakly_canonical(out_dir_, ec);
        const auto canon_in = fs::weakly_canonical(p, ec);
        if (canon_in.parent_path() == canon_out)
            return {canon_in.filename().string(), sha256_file(canon_in.string()), true};
        return {given, sha256_file(given), false};
    }

    std::string resolve(const ArtifactRef& a) const {
        return a.internal ? (out_dir_ / a.path).string() : a.path;
    }

    /// Resolves a file name against the run directory first.
    std::string locate(const std::string& given) const {
        const fs::path p(given);
        if (p.is_relative() && fs::exists(out_dir_ / p)) return (out_dir_ / p).string();
        return given;
    }

    std::string plot_comment() const {
        if (reproducible_) return {};
        const auto now = std::chrono::system_clock::now();
        return fmt::format("generated {} s since epoch",
                           std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count());
    }

    void record(StepRecord rec) {
        manifest_.upsert(std::move(rec));
        save_manifest();
    }

    void save_manifest() const { save_json_file(manifest_to_json(manifest_), path(manifest_file).string()); }

private:
    fs::path out_dir_;
    bool reproducible_ = true;
    Manifest manifest_;
};

/// Every artifact in the manifest must exist and match its recorded hash.
inline void verify_manifest(const Manifest& m, const RunContext& ctx) {
    for (const auto& s : m.steps) {
        for (const auto* list : {&s.inputs, &s.outputs}) {
            for (const auto& a : *list) {
                const auto p = ctx.resolve(a);
                if (!fs::exists(p)) fail_missing(fmt::format("step '{}': artifact '{}' is missing", s.name, p));
                const auto h = sha256_file(p);
                if (h != a.sha256)
                    fail_missing(fmt::format("step '{}': artifact '{}' changed since it was recorded "
                                             "(sha256 {} != {})",
                                             s.name, p, h, a.sha256));
            }
        }
    }
}

/// Runs `body`, prefixing any failure with the step name.
template <class F>
auto run_step(const std::string& name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("step '{}' failed: {}", name, e.what()));
    } catch (const std::exception& e) {
        throw Error(ErrorKind::numerical, fmt::format("step '{}' failed: {}", name, e.what()));
    }
}

// ---- individual steps -------------------------------------------------------

inline ArtifactRef step_extract(RunContext& ctx, const std::string& svg_path, const figure::ExtractConfig& config) {
    StepRecord rec{"extract", {ctx.input(svg_path)}, {}, figure::extract_config_to_json(config)};
    const auto doc = figure::SvgDocument::parse(detail::read_file(svg_path));
    auto ex = figure::extract_figure(doc, config);
    ex.decoded.dataset.provenance = "extracted from " + fs::path(svg_path).filename().string();
    const auto data_ref = ctx.write("dataset.csv", dataset_to_csv(ex.decoded.dataset));
    rec.outputs.push_back(data_ref);
    rec.outputs.push_back(ctx.write_json("extract_diagnostics.json", figure::diagnostics_to_json(ex)));
    ctx.record(std::move(rec));
    return data_ref;
}

inline std::string variant_suffix(const FitConfig& c) { return c.drop_outliers ? "no_outliers" : "with_outliers"; }

struct FitStepOutput {
    FitResult result;
    ArtifactRef fit_json;
};

inline FitStepOutput step_fit(RunContext& ctx, const std::string& dataset_path, const FitConfig& config,
                              std::string name = {}) {
    if (name.empty()) name = variant_suffix(config);
    StepRecord rec{"fit_" + name, {ctx.input(dataset_path)}, {}, fit_config_to_json(config)};
    const auto data = load_dataset(ctx.locate(dataset_path));
    data.validate();
    const auto view = fit_view(data, config);
    auto res = fit(view, config);
    json j = fit_result_to_json(res);
    j["dataset_points"] = data.size();
    j["dropped_outliers"] = data.size() - view.size();
    const auto fit_ref = ctx.write_json("fit_" + name + ".json", j);
    rec.outputs.push_back(fit_ref);
    rec.outputs.push_back(ctx.write("grid_" + name + ".csv", grid_results_csv(res)));
    rec.outputs.push_back(ctx.write("residuals_fit_" + name + ".csv", objective_report(res.best, view, config).to_csv()));
    ctx.record(std::move(rec));
    return {std::move(res), fit_ref};
}

struct BootstrapStepOutput {
    BootstrapResult result;
    ArtifactRef summary;
    ArtifactRef samples;
};

inline BootstrapStepOutput step_bootstrap(RunContext& ctx, const std::string& dataset_path, const FitConfig& config,
                                          std::size_t resamples, std::uint64_t seed,
                                          const std::optional<std::string>& warm_fit_path, std::string name = {}) {
    if (name.empty()) name = variant_suffix(config);
    StepRecord rec{"bootstrap_" + name, {ctx.input(dataset_path)}, {}, fit_config_to_json(config)};
    rec.config["resamples"] = resamples;
    rec.config["seed"] = seed;
    std::optional<LogSpaceParams> warm;
    if (warm_fit_path) {
        rec.inputs.push_back(ctx.input(*warm_fit_path));
        warm = params_from_json(load_json_file(ctx.locate(*warm_fit_path)));
    }
    const auto data = load_dataset(ctx.locate(dataset_path));
    data.validate();
    const auto view = fit_view(data, config);
    auto res = bootstrap_fit(view, config, resamples, seed, warm);
    BootstrapStepOutput out{std::move(res), {}, {}};
    out.summary = ctx.write_json("bootstrap_" + name + ".json", bootstrap_to_json(out.result));
    out.samples = ctx.write("bootstrap_" + name + "_samples.csv", bootstrap_samples_csv(out.result));
    rec.outputs = {out.summary, out.samples};
    ctx.manifest().seeds["bootstrap_" + name] = seed;
    ctx.record(std::move(rec));
    return out;
}

/// Covariance-based equality test plus per-parameter tests of `reference`
/// against the fitted parameters, using bootstrap samples of the fit.
inline json parameter_tests(const LogSpaceParams& ours, const LogSpaceParams& reference_params,
                            const Eigen::MatrixXd& samples) {
    json j;
    j["chi2"] = test_report_to_json(
        chi2_equality_test(reference_params.to_vector(), ours.to_vector(), stats::sample_covariance(samples)));
    const auto nat = natural_parameter_statistics(samples);
    const auto o = ours.to_natural(), r = reference_params.to_natural();
    const std::array<double, 5> ov{o.E, o.A, o.B, o.alpha, o.beta}, rv{r.E, r.A, r.B, r.alpha, r.beta};
    static constexpr std::array<const char*, 5> names{"E", "A", "B", "alpha", "beta"};
    json z = json::object();
    for (int k = 0; k < 5; ++k) {
        std::vector<double> col;
        for (Eigen::Index i = 0; i < samples.rows(); ++i) {
            const auto p = LogSpaceParams::from_vector(samples.row(i).transpose()).to_natural();
            const std::array<double, 5> v{p.E, p.A, p.B, p.alpha, p.beta};
            col.push_back(v[k]);
        }
        json t = test_report_to_json(per_parameter_z_test(rv[k], ov[k], nat[k].se));
        t["ours"] = ov[k];
        t["reference"] = rv[k];
        t["se"] = nat[k].se;
        t["p_percentile"] = bootstrap_percentile_p(col, rv[k]);
        z[names[k]] = t;
    }
    j["per_parameter"] = z;
    return j;
}

inline ArtifactRef step_test_params(RunContext& ctx, const std::string& fit_path, const std::string& samples_path,
                                    const std::string& reference_spec, std::string name) {
    StepRecord rec{"test_params_" + name, {ctx.input(fit_path), ctx.input(samples_path)}, {}, json::object()};
    rec.config["reference"] = reference_spec;
    const auto ours = params_from_json(load_json_file(ctx.locate(fit_path)));
    const auto ref = resolve_params(reference_spec);
    const auto samples = bootstrap_samples_from_csv(detail::read_file(ctx.locate(samples_path)));
    json j = parameter_tests(ours, ref, samples);
    j["reference"] = reference_spec;
    j["reference_params"] = log_params_to_json(ref);
    j["fit_params"] = log_params_to_json(ours);
    j["bootstrap_samples"] = samples.rows();
    const auto out = ctx.write_json("tests_" + name + ".json", j);
    rec.outputs.push_back(out);
    ctx.record(std::move(rec));
    return out;
}

/// Log-likelihood ladder: the two published parameter sets with a free
/// scale, against the joint maximum-likelihood fit started from our fit.
inline json likelihood_ladder(const Dataset& data, const LogSpaceParams& ours, double delta) {
    const auto rounded = fit_sigma_profile(reference::hoffmann_rounded, data, delta);
    const auto unrounded = fit_sigma_profile(reference::hoffmann_unrounded, data, delta);
    const auto profile = fit_sigma_profile(ours.to_natural(), data, delta);
    const auto joint = fit_joint_likelihood(data, ours, delta);
    const auto lr_unrounded = likelihood_ratio_test(unrounded.log_likelihood, joint.log_likelihood, 5);
    const auto lr_rounded = likelihood_ratio_test(rounded.log_likelihood, joint.log_likelihood, 5);
    return {{"n_observations", data.size()},
            {"delta", delta},
            {"hoffmann_rounded", {{"sigma", rounded.sigma_hat}, {"log_likelihood", rounded.log_likelihood}}},
            {"hoffmann_unrounded", {{"sigma", unrounded.sigma_hat}, {"log_likelihood", unrounded.log_likelihood}}},
            {"ours_profile", {{"sigma", profile.sigma_hat}, {"log_likelihood", profile.log_likelihood}}},
            {"ours",
             {{"sigma", joint.sigma},
              {"log_likelihood", joint.log_likelihood},
              {"log_params", log_params_to_json(joint.params)},
              {"iterations", joint.iterations},
              {"stop_reason", to_string(joint.reason)}}},
            {"gap_rounded_to_unrounded", unrounded.log_likelihood - rounded.log_likelihood},
            {"gap_unrounded_to_ours", joint.log_likelihood - unrounded.log_likelihood},
            {"lr_vs_unrounded", test_report_to_json(lr_unrounded)},
            {"lr_vs_rounded", test_report_to_json(lr_rounded)}};
}

inline ArtifactRef step_lrt(RunContext& ctx, const std::string& dataset_path, const std::string& fit_path,
                            const FitConfig& config, std::string name = {}) {
    if (name.empty()) name = variant_suffix(config);
    StepRecord rec{"lrt_" + name, {ctx.input(dataset_path), ctx.input(fit_path)}, {}, fit_config_to_json(config)};
    const auto data = load_dataset(ctx.locate(dataset_path));
    data.validate();
    const auto view = fit_view(data, config);
    const auto ours = params_from_json(load_json_file(ctx.locate(fit_path)));
    const auto out = ctx.write_json("loglik_" + name + ".json", likelihood_ladder(view, ours, config.delta));
    rec.outputs.push_back(out);
    ctx.record(std::move(rec));
    return out;
}

struct ResidualSummary {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
    double median_huber = 0.0;
};

inline ResidualSummary summarize_residuals(const ResidualReport& r) {
    ResidualSummary s;
    s.mean = stats::mean(r.residuals);
    s.se = stats::sample_sd(r.residuals) / std::sqrt(static_cast<double>(r.residuals.size()));
    s.median_huber = stats::quantile(r.huber_losses, 0.5);
    return s;
}

/// Goodness-of-fit comparison of our fit against both published sets.
inline json goodness_of_fit(const Dataset& data, const LogSpaceParams& ours, double delta) {
    const auto mine = objective_report(ours, data, delta, Aggregation::sum);
    json j{{"n_observations", data.size()}};
    auto summary = [](const ResidualReport& r) {
        const auto s = summarize_residuals(r);
        return json{{"mean_residual", s.mean}, {"se_mean_residual", s.se}, {"median_huber", s.median_huber},
                    {"total_huber", r.total}};
    };
    j["ours"] = summary(mine);
    for (const auto& [key, params] : {std::pair{"hoffmann_rounded", reference::hoffmann_rounded},
                                      std::pair{"hoffmann_unrounded", reference::hoffmann_unrounded}}) {
        const auto theirs = objective_report(params.to_log(), data, delta, Aggregation::sum);
        const auto s = summarize_residuals(theirs);
        std::size_t below_median = 0, lower = 0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            below_median += mine.huber_losses[i] < s.median_huber;
            lower += mine.huber_losses[i] < theirs.huber_losses[i];
        }
        json t = summary(theirs);
        t["fraction_ours_below_their_median"] = static_cast<double>(below_median) / static_cast<double>(data.size());
        t["fraction_ours_lower"] = static_cast<double>(lower) / static_cast<double>(data.size());
        j[key] = t;
    }
    return j;
}

inline std::vector<ArtifactRef> step_residuals(RunContext& ctx, const std::string& dataset_path,
                                               const std::string& fit_path, const FitConfig& config) {
    StepRecord rec{"residuals", {ctx.input(dataset_path), ctx.input(fit_path)}, {}, fit_config_to_json(config)};
    const auto data = load_dataset(ctx.locate(dataset_path));
    data.validate();
    const auto view = fit_view(data, config);
    const auto ours = params_from_json(load_json_file(ctx.locate(fit_path)));
    std::vector<double> flop;
    for (const auto& o : view.observations) flop.push_back(o.flop);
    const std::pair<std::string, LogSpaceParams> sets[] = {
        {"ours", ours},
        {"hoffmann_rounded", reference::hoffmann_rounded.to_log()},
        {"hoffmann_unrounded", reference::hoffmann_unrounded.to_log()}};
    const char* colors[] = {"#1f77b4", "#d62728", "#ff7f0e"};
    for (std::size_t k = 0; k < 3; ++k) {
        const auto& [key, params] = sets[k];
        const auto rep = objective_report(params, view, config.delta, Aggregation::sum);
        rec.outputs.push_back(ctx.write("residuals_" + key + ".csv", rep.to_csv()));
        rec.outputs.push_back(ctx.write("residuals_" + key + ".svg",
                                        plot::residual_plot("Residuals: " + key, flop, rep.residuals, colors[k],
                                                            ctx.plot_comment())));
    }
    rec.outputs.push_back(ctx.write_json("gof.json", goodness_of_fit(view, ours, config.delta)));
    auto outputs = rec.outputs;
    ctx.record(std::move(rec));
    return outputs;
}

inline constexpr double reference_model_compute = 5.88e23;
inline constexpr double extrapolation_compute = 1e26;

inline std::vector<ArtifactRef> step_policy(RunContext& ctx, const std::string& fit_path,
                                            const std::optional<std::string>& samples_path,
                                            const PolicyOptions& opt, double flop_multiplier) {
    StepRecord rec{"policy", {ctx.input(fit_path)}, {}, json::object()};
    rec.config = {{"compute_min", opt.compute_min},
                  {"compute_max", opt.compute_max},
                  {"points", opt.points},
                  {"coverage", opt.coverage},
                  {"flop_multiplier", flop_multiplier}};
    const auto ours = params_from_json(load_json_file(ctx.locate(fit_path)));
    if (ours.degenerate()) fail_numerical("policy: fitted exponents are not both positive");
    const auto grid = compute_grid(opt.compute_min, opt.compute_max, opt.points);
    auto curve = policy_curve(ours.to_natural(), grid, flop_multiplier);
    const auto hoff = policy_curve(reference::hoffmann_unrounded, grid, flop_multiplier);

    const auto pe = policy_exponents(ours.alpha, ours.beta);
    const auto he = policy_exponents(reference::hoffmann_unrounded);
    json summary{
        {"coverage", opt.coverage},
        {"flop_multiplier", flop_multiplier},
        {"ours", {{"a_policy", pe.a_policy}, {"b_policy", pe.b_policy}}},
        {"hoffmann_unrounded", {{"a_policy", he.a_policy}, {"b_policy", he.b_policy}}},
    };
    for (const auto& [key, C] : {std::pair{"reference_model", reference_model_compute}, std::pair{"extrapolation", extrapolation_compute}}) {
        const auto a = optimal_allocation(ours, C, flop_multiplier);
        const auto h = optimal_allocation(reference::hoffmann_unrounded, C, flop_multiplier);
        summary["ours"][key] = {{"compute", C}, {"n_opt", a.n_opt}, {"d_opt", a.d_opt}, {"ratio", a.ratio}};
        summary["hoffmann_unrounded"][key] = {{"compute", C}, {"n_opt", h.n_opt}, {"d_opt", h.d_opt}, {"ratio", h.ratio}};
    }
    if (samples_path) {
        rec.inputs.push_back(ctx.input(*samples_path));
        const auto samples = bootstrap_samples_from_csv(detail::read_file(ctx.locate(*samples_path)));
        attach_band(curve, samples, opt.coverage, flop_multiplier);
        for (const auto& [key, C] :
             {std::pair{"reference_model", reference_model_compute}, std::pair{"extrapolation", extrapolation_compute}}) {
            auto point = policy_curve(ours.to_natural(), {C}, flop_multiplier);
            attach_band(point, samples, opt.coverage, flop_multiplier);
            summary["ours"][key]["band_lo"] = point.ratio_lo[0];
            summary["ours"][key]["band_hi"] = point.ratio_hi[0];
        }
        summary["band_samples"] = curve.band_samples;
        summary["degenerate_samples"] = curve.degenerate_samples;
        summary["ours"]["a_policy_bootstrap"] = derived_statistic_to_json(derived_statistic(samples, policy_a));
    }
    rec.outputs.push_back(ctx.write("policy_ours.csv", curve.to_csv()));
    rec.outputs.push_back(ctx.write("policy_hoffmann.csv", hoff.to_csv()));
    rec.outputs.push_back(ctx.write_json("policy_summary.json", summary));
    rec.outputs.push_back(ctx.write("policy.svg", plot::policy_plot({{"Our fit", curve}, {"Hoffmann et al. fit", hoff}},
                                                                    ctx.plot_comment())));
    auto outputs = rec.outputs;
    ctx.record(std::move(rec));
    return outputs;
}

}  // namespace scalefit
