#pragma once

// End-to-end run: extract -> fit -> bootstrap -> tests -> policy -> report.

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "scalefit/pipeline.hpp"
#include "scalefit/report.hpp"

namespace scalefit {

inline const std::vector<std::string> default_pipeline_steps{"extract", "fit",       "bootstrap", "test",
                                                             "lrt",     "residuals", "policy",    "report"};

using Logger = std::function<void(const std::string&)>;

/// Paths in the pipeline section are relative to the config file's directory.
inline std::string resolve_relative(const std::string& path, const fs::path& base) {
    const fs::path p(path);
    return p.is_absolute() || base.empty() ? path : (base / p).lexically_normal().string();
}

inline Manifest run_pipeline(const RunConfig& rc, const fs::path& config_dir, RunContext& ctx,
                             const Logger& log = [](const std::string&) {}) {
    const auto& pj = rc.pipeline;
    std::vector<std::string> steps = default_pipeline_steps;
    if (pj.contains("steps")) steps = pj.at("steps").get<std::vector<std::string>>();
    for (const auto& s : steps)
        if (std::find(default_pipeline_steps.begin(), default_pipeline_steps.end(), s) == default_pipeline_steps.end())
            fail_input("pipeline: unknown step '" + s + "'");
    auto enabled = [&](const std::string& s) { return std::find(steps.begin(), steps.end(), s) != steps.end(); };

    ctx.manifest().config = run_config_to_json(rc);
    ctx.manifest().seeds = json::object();

    std::string dataset;
    if (pj.contains("dataset")) {
        dataset = resolve_relative(pj.at("dataset").get<std::string>(), config_dir);
        if (!fs::exists(dataset)) fail_missing(fmt::format("pipeline: dataset '{}' does not exist", dataset));
    } else if (pj.contains("svg")) {
        const auto svg = resolve_relative(pj.at("svg").get<std::string>(), config_dir);
        if (!fs::exists(svg)) fail_missing(fmt::format("pipeline: figure '{}' does not exist", svg));
        if (!enabled("extract")) fail_input("pipeline: an svg input needs the extract step");
        log("extract: " + svg);
        const auto ref = run_step("extract", [&] {
            return step_extract(ctx, svg, figure::extract_config_from_json(rc.extract));
        });
        dataset = ref.path;
    } else {
        fail_input("pipeline: config needs pipeline.dataset or pipeline.svg");
    }

    FitConfig dropped = rc.fit, kept = rc.fit;
    dropped.drop_outliers = true;
    kept.drop_outliers = false;
    const FitConfig& headline = rc.fit.drop_outliers ? dropped : kept;
    const std::string head = variant_suffix(headline);
    const std::pair<std::string, FitConfig> variants[] = {{"no_outliers", dropped}, {"with_outliers", kept}};

    if (enabled("fit"))
        for (const auto& [name, cfg] : variants) {
            log("fit: " + name);
            run_step("fit_" + name, [&] { return step_fit(ctx, dataset, cfg, name); });
        }
    const std::string head_fit = "fit_" + head + ".json";

    const bool do_boot = enabled("bootstrap") && rc.resamples > 0;
    if (do_boot)
        for (const auto& [name, cfg] : variants) {
            log(fmt::format("bootstrap: {} ({} resamples)", name, rc.resamples));
            run_step("bootstrap_" + name, [&] {
                return step_bootstrap(ctx, dataset, cfg, rc.resamples, rc.seed, "fit_" + name + ".json", name);
            });
        }

    if (enabled("test") && do_boot)
        for (const auto& [name, cfg] : variants) {
            log("test-params: " + name);
            run_step("test_params_" + name, [&] {
                return step_test_params(ctx, "fit_" + name + ".json", "bootstrap_" + name + "_samples.csv", "hoffmann_unrounded",
                                        name);
            });
        }

    if (enabled("lrt"))
        for (const auto& [name, cfg] : variants) {
            log("lrt: " + name);
            run_step("lrt_" + name, [&] { return step_lrt(ctx, dataset, "fit_" + name + ".json", cfg, name); });
        }

    if (enabled("residuals")) {
        log("residuals");
        run_step("residuals", [&] { return step_residuals(ctx, dataset, head_fit, headline); });
    }

    if (enabled("policy")) {
        log("policy");
        std::optional<std::string> samples;
        if (do_boot) samples = "bootstrap_" + head + "_samples.csv";
        run_step("policy", [&] { return step_policy(ctx, head_fit, samples, rc.policy, rc.fit.flop_multiplier); });
    }

    if (enabled("report")) {
        log("report");
        run_step("report", [&] { return step_report(ctx); });
    }
    ctx.save_manifest();
    return ctx.manifest();
}

}  // namespace scalefit
