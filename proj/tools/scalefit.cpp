// scalefit: command-line front end for the scaling-law fitting pipeline.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "scalefit/artifacts.hpp"
#include "scalefit/figure/synthetic_figure.hpp"
#include "scalefit/run_pipeline.hpp"
#include "scalefit/synthetic.hpp"

namespace {

using namespace scalefit;

enum ExitCode { exit_ok = 0, exit_bad_input = 2, exit_numerical = 3, exit_missing = 4 };

struct Globals {
    std::optional<std::uint64_t> seed;
    std::string config_path;
    std::string out_dir = "scalefit-run";
    std::optional<bool> drop_outliers;
    std::optional<std::string> aggregation;
    bool reproducible = true;
    std::optional<unsigned> workers;
    bool quiet = false;
};

RunConfig load_run_config(const Globals& g) {
    RunConfig rc;
    if (!g.config_path.empty()) rc = run_config_from_json(load_json_file(g.config_path));
    if (g.seed) rc.seed = *g.seed;
    if (g.drop_outliers) rc.fit.drop_outliers = *g.drop_outliers;
    if (g.aggregation) rc.fit.aggregation = aggregation_from_string(*g.aggregation);
    if (g.workers) rc.workers = *g.workers;
    rc.fit.workers = rc.workers;
    rc.fit.validate();
    return rc;
}

fs::path config_dir(const Globals& g) {
    return g.config_path.empty() ? fs::path() : fs::path(g.config_path).parent_path();
}

void print_outputs(const RunContext& ctx, const std::string& step) {
    if (const auto* s = ctx.manifest().step(step))
        for (const auto& a : s->outputs) std::cout << ctx.resolve(a) << "\n";
}

int run(int argc, char** argv) {
    CLI::App app{"Fit, bootstrap, test and apply parametric scaling laws L(N, D) = E + A/N^alpha + B/D^beta"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", std::string(tool_version));

    Globals g;
    app.add_option("--seed", g.seed, "Seed for bootstrap resampling");
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--out-dir", g.out_dir, "Run directory for artifacts")->capture_default_str();
    app.add_flag_callback("--drop-outliers", [&] { g.drop_outliers = true; }, "Drop low tokens-per-parameter runs (default)");
    app.add_flag_callback("--keep-outliers", [&] { g.drop_outliers = false; }, "Keep every run");
    app.add_option("--aggregation", g.aggregation, "Huber loss aggregation")->check(CLI::IsMember({"sum", "mean"}));
    app.add_flag("--reproducible,!--no-reproducible", g.reproducible,
                 "Strip timestamps from plots (default on)");
    app.add_option("--workers", g.workers, "Worker threads (0: all cores)");
    app.add_flag("-q,--quiet", g.quiet, "Suppress progress messages");

    // extract
    auto* extract = app.add_subcommand("extract", "Extract a dataset from an SVG scatter figure");
    std::string svg_path;
    std::optional<std::string> orientation, points_sel, colorbar_kind, x_quantity, y_quantity;
    std::optional<double> vmin, vmax;
    extract->add_option("--svg", svg_path, "SVG figure")->required();
    extract->add_option("--orientation", orientation, "Color bar orientation")
        ->check(CLI::IsMember({"top_is_max", "top_is_min"}));
    extract->add_option("--points-selector", points_sel, "Selector of the point group");
    extract->add_option("--colorbar-kind", colorbar_kind)->check(CLI::IsMember({"auto", "rects", "gradient", "image"}));
    extract->add_option("--value-min", vmin, "Loss at the low end of the color bar");
    extract->add_option("--value-max", vmax, "Loss at the high end of the color bar");
    extract->add_option("--x-quantity", x_quantity)->check(CLI::IsMember({"flop", "n_params", "tokens"}));
    extract->add_option("--y-quantity", y_quantity)->check(CLI::IsMember({"flop", "n_params", "tokens"}));

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit the scaling law by multistart Huber-loss minimization");
    std::string data_path;
    std::optional<double> loss_change_tol;
    fit_cmd->add_option("--data", data_path, "Dataset CSV or JSON")->required();
    fit_cmd->add_option("--loss-change-tolerance", loss_change_tol,
                        "Stop when the objective decreases by less than this (0: off)");

    // bootstrap
    auto* boot = app.add_subcommand("bootstrap", "Bootstrap the fit over observations");
    std::optional<std::size_t> resamples;
    std::optional<std::string> warm_fit;
    boot->add_option("--data", data_path, "Dataset CSV or JSON")->required();
    boot->add_option("--resamples", resamples, "Number of resamples");
    boot->add_option("--fit", warm_fit, "Fit JSON used as the warm start");

    // test-params
    auto* tests = app.add_subcommand("test-params", "Test fitted parameters against a reference set");
    std::string fit_path, samples_path, reference = "hoffmann_unrounded", name;
    tests->add_option("--fit", fit_path, "Fit JSON")->required();
    tests->add_option("--samples", samples_path, "Bootstrap samples CSV")->required();
    tests->add_option("--reference", reference, "hoffmann_unrounded, hoffmann_rounded or a params JSON")
        ->capture_default_str();
    tests->add_option("--name", name, "Artifact suffix (default from the outlier flag)");

    // lrt
    auto* lrt = app.add_subcommand("lrt", "Huber log-likelihoods and likelihood-ratio tests");
    std::optional<double> ll_null, ll_alt;
    int dof = 5;
    lrt->add_option("--data", data_path, "Dataset CSV or JSON");
    lrt->add_option("--fit", fit_path, "Fit JSON");
    lrt->add_option("--ll-null", ll_null, "Null log-likelihood (direct mode)");
    lrt->add_option("--ll-alt", ll_alt, "Alternative log-likelihood (direct mode)");
    lrt->add_option("--dof", dof, "Degrees of freedom")->capture_default_str();

    // policy
    auto* policy = app.add_subcommand("policy", "Compute-optimal allocation curves");
    std::optional<std::string> policy_samples;
    std::optional<double> cmin, cmax, coverage;
    std::optional<std::size_t> points;
    policy->add_option("--fit", fit_path, "Fit JSON")->required();
    policy->add_option("--samples", policy_samples, "Bootstrap samples CSV for the band");
    policy->add_option("--compute-min", cmin);
    policy->add_option("--compute-max", cmax);
    policy->add_option("--points", points);
    policy->add_option("--coverage", coverage);

    auto* report = app.add_subcommand("report", "Render the markdown report from the run directory");
    auto* pipeline = app.add_subcommand("pipeline", "Run every step from a config file");

    // synthesize: ground-truth data and figures for trying the tool out
    auto* synth = app.add_subcommand("synthesize", "Write a synthetic dataset and matching SVG figure");
    std::size_t synth_points = 200;
    double synth_noise = 0.02;
    synth->add_option("--points", synth_points)->capture_default_str();
    synth->add_option("--noise", synth_noise, "Log-normal noise sigma on loss")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_bad_input;
    }

    auto log = [&](const std::string& msg) {
        if (!g.quiet) std::cerr << "[scalefit] " << msg << "\n";
    };

    try {
        const RunConfig rc = load_run_config(g);
        RunContext ctx(g.out_dir, g.reproducible);

        if (extract->parsed()) {
            auto cfg = figure::extract_config_from_json(rc.extract);
            if (orientation) cfg.orientation = figure::orientation_from_string(*orientation);
            if (points_sel) cfg.points_selector = *points_sel;
            if (colorbar_kind) cfg.colorbar_kind = figure::colorbar_kind_from_string(*colorbar_kind);
            if (vmin) cfg.value_min = *vmin;
            if (vmax) cfg.value_max = *vmax;
            if (x_quantity) cfg.decode.x_quantity = figure::quantity_from_string(*x_quantity);
            if (y_quantity) cfg.decode.y_quantity = figure::quantity_from_string(*y_quantity);
            cfg.decode.flop_multiplier = rc.fit.flop_multiplier;
            step_extract(ctx, svg_path, cfg);
            print_outputs(ctx, "extract");
        } else if (fit_cmd->parsed()) {
            FitConfig cfg = rc.fit;
            if (loss_change_tol) cfg.loss_change_tolerance = *loss_change_tol;
            cfg.validate();
            log(fmt::format("fitting {} starts ({} aggregation)", cfg.init_grid.size(), to_string(cfg.aggregation)));
            const auto out = step_fit(ctx, data_path, cfg);
            const auto& p = out.result.best_natural;
            log(fmt::format("E={:.4f} A={:.2f} B={:.2f} alpha={:.4f} beta={:.4f} ({} of {} starts converged)", p.E,
                            p.A, p.B, p.alpha, p.beta, out.result.n_converged, out.result.grid_results.size()));
            print_outputs(ctx, "fit_" + variant_suffix(cfg));
        } else if (boot->parsed()) {
            const std::size_t r = resamples.value_or(rc.resamples);
            log(fmt::format("bootstrap: {} resamples, seed {}", r, rc.seed));
            const auto out = step_bootstrap(ctx, data_path, rc.fit, r, rc.seed, warm_fit);
            log(fmt::format("a_policy = {:.4f} (SE {:.4f}), {} grid fallbacks", out.result.a_policy.point,
                            out.result.a_policy.se, out.result.grid_fallbacks));
            print_outputs(ctx, "bootstrap_" + variant_suffix(rc.fit));
        } else if (tests->parsed()) {
            const std::string n = name.empty() ? variant_suffix(rc.fit) : name;
            const auto ref = step_test_params(ctx, fit_path, samples_path, reference, n);
            const auto j = load_json_file(ctx.resolve(ref));
            log(fmt::format("chi2 = {:.4g} on {} dof, p = {:.3g}", j["chi2"]["statistic"].get<double>(),
                            j["chi2"]["dof"].get<int>(), j["chi2"]["p_value"].get<double>()));
            print_outputs(ctx, "test_params_" + n);
        } else if (lrt->parsed()) {
            if (ll_null || ll_alt) {
                if (!ll_null || !ll_alt) fail_input("lrt: direct mode needs both --ll-null and --ll-alt");
                std::cout << test_report_to_json(likelihood_ratio_test(*ll_null, *ll_alt, dof)).dump(2) << "\n";
            } else {
                if (data_path.empty() || fit_path.empty())
                    fail_input("lrt: give --data and --fit, or --ll-null and --ll-alt");
                step_lrt(ctx, data_path, fit_path, rc.fit);
                print_outputs(ctx, "lrt_" + variant_suffix(rc.fit));
            }
        } else if (policy->parsed()) {
            PolicyOptions opt = rc.policy;
            if (cmin) opt.compute_min = *cmin;
            if (cmax) opt.compute_max = *cmax;
            if (points) opt.points = *points;
            if (coverage) opt.coverage = *coverage;
            step_policy(ctx, fit_path, policy_samples, opt, rc.fit.flop_multiplier);
            print_outputs(ctx, "policy");
        } else if (report->parsed()) {
            const auto lint = step_report(ctx);
            log(fmt::format("report lint: {} citations, {} numbers checked", lint.citations, lint.numbers_checked));
            print_outputs(ctx, "report");
        } else if (pipeline->parsed()) {
            if (g.config_path.empty()) fail_input("pipeline: --config is required");
            run_pipeline(rc, config_dir(g), ctx, log);
            std::cout << ctx.path(manifest_file).string() << "\n";
        } else if (synth->parsed()) {
            SyntheticDesign d;
            d.n_points = synth_points;
            d.noise_sigma = synth_noise;
            d.random_design = true;
            auto data = generate_law_dataset(reference::refit_no_outliers, d, rc.seed);
            const auto fig = figure::generate_synthetic_figure(data);
            save_dataset_csv(data, ctx.path("synthetic_dataset.csv").string());
            detail::write_file(ctx.path("synthetic_figure.svg").string(), fig.svg);
            save_json_file({{"extract", figure::extract_config_to_json(fig.config)}},
                           ctx.path("synthetic_extract_config.json").string());
            for (const char* f : {"synthetic_dataset.csv", "synthetic_figure.svg", "synthetic_extract_config.json"})
                std::cout << ctx.path(f).string() << "\n";
        }
    } catch (const Error& e) {
        std::cerr << "scalefit: " << e.what() << "\n";
        switch (e.kind()) {
            case ErrorKind::bad_input: return exit_bad_input;
            case ErrorKind::numerical: return exit_numerical;
            case ErrorKind::missing_artifact: return exit_missing;
        }
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "scalefit: " << e.what() << "\n";
        return exit_bad_input;
    } catch (const std::exception& e) {
        std::cerr << "scalefit: " << e.what() << "\n";
        return exit_numerical;
    }
    return exit_ok;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
