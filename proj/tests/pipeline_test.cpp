#include <cstdlib>
#include <fstream>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "scalefit/run_pipeline.hpp"
#include "scalefit/synthetic.hpp"
#include "test_support.hpp"

namespace scalefit {
namespace {

using testing::error_kind_of;
using testing::TempDir;

json small_config(const std::string& dataset, std::size_t resamples) {
    return {{"seed", 11},
            {"workers", 1},
            {"fit", {{"init_grid", {{"a", {0, 5, 10}}, {"b", {0, 5, 10}}, {"e", {0, 0.5}}, {"alpha", {0.2, 0.6}}, {"beta", {0.2, 0.6}}}}}},
            {"bootstrap", {{"resamples", resamples}}},
            {"policy", {{"points", 5}}},
            {"pipeline", {{"dataset", dataset}}}};
}

std::string write_dataset(const TempDir& dir) {
    SyntheticDesign d;
    d.n_points = 80;
    d.noise_sigma = 0.02;
    d.random_design = true;
    const auto path = dir.file("data.csv");
    save_dataset_csv(generate_law_dataset(reference::refit_no_outliers, d, 5), path);
    return path;
}

Manifest run(const json& cfg, const fs::path& out, bool reproducible = true) {
    RunContext ctx(out, reproducible);
    return run_pipeline(run_config_from_json(cfg), {}, ctx);
}

TEST(Pipeline, ProducesArtifactsAndCleanReport) {
    TempDir dir;
    const auto m = run(small_config(write_dataset(dir), 120), dir.path() / "run");
    for (const char* f : {"manifest.json", "fit_no_outliers.json", "fit_with_outliers.json", "bootstrap_no_outliers.json",
                          "bootstrap_no_outliers_samples.csv", "policy_summary.json", "policy.svg", "report.md",
                          "report_lint.json"})
        EXPECT_TRUE(fs::exists(dir.path() / "run" / f)) << f;
    ASSERT_NE(m.step("report"), nullptr);
    const auto lint = load_json_file((dir.path() / "run" / "report_lint.json").string());
    EXPECT_TRUE(lint.at("ok").get<bool>());
    EXPECT_GT(lint.at("citations").get<int>(), 10);
    RunContext ctx(dir.path() / "run", true);
    EXPECT_NO_THROW(verify_manifest(ctx.manifest(), ctx));
}

TEST(Pipeline, MissingInputNamesThePath) {
    TempDir dir;
    const auto missing = dir.file("nope.csv");
    try {
        run(small_config(missing, 0), dir.path() / "run");
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_artifact);
        EXPECT_NE(std::string(e.what()).find(missing), std::string::npos) << e.what();
    }
}

TEST(Pipeline, RepeatedRunsAreByteIdentical) {
    TempDir dir;
    const auto data = write_dataset(dir);
    run(small_config(data, 120), dir.path() / "a");
    run(small_config(data, 120), dir.path() / "b");
    const auto ma = manifest_from_json(load_json_file((dir.path() / "a" / "manifest.json").string()));
    const auto mb = manifest_from_json(load_json_file((dir.path() / "b" / "manifest.json").string()));
    ASSERT_EQ(ma.steps.size(), mb.steps.size());
    for (std::size_t i = 0; i < ma.steps.size(); ++i) {
        ASSERT_EQ(ma.steps[i].outputs.size(), mb.steps[i].outputs.size());
        for (std::size_t k = 0; k < ma.steps[i].outputs.size(); ++k)
            EXPECT_EQ(ma.steps[i].outputs[k].sha256, mb.steps[i].outputs[k].sha256)
                << ma.steps[i].name << " " << ma.steps[i].outputs[k].path;
    }
}

TEST(Pipeline, WithoutBootstrapTheReportFlagsMissingErrors) {
    TempDir dir;
    run(small_config(write_dataset(dir), 0), dir.path() / "run");
    EXPECT_FALSE(fs::exists(dir.path() / "run" / "bootstrap_no_outliers.json"));
    const auto md = detail::read_file((dir.path() / "run" / "report.md").string());
    EXPECT_NE(md.find("standard errors are not shown"), std::string::npos);
}

TEST(Pipeline, TamperedArtifactFailsVerification) {
    TempDir dir;
    run(small_config(write_dataset(dir), 0), dir.path() / "run");
    std::ofstream(dir.path() / "run" / "fit_no_outliers.json", std::ios::app) << " ";
    RunContext ctx(dir.path() / "run", true);
    EXPECT_EQ(error_kind_of([&] { verify_manifest(ctx.manifest(), ctx); }), ErrorKind::missing_artifact);
    EXPECT_EQ(error_kind_of([&] { step_report(ctx); }), ErrorKind::missing_artifact);
}

TEST(Pipeline, ReproducibleModeOmitsTimestamps) {
    TempDir dir;
    const auto cfg = small_config(write_dataset(dir), 0);
    run(cfg, dir.path() / "r", true);
    run(cfg, dir.path() / "t", false);
    EXPECT_EQ(detail::read_file((dir.path() / "r" / "policy.svg").string()).find("since epoch"), std::string::npos);
    EXPECT_NE(detail::read_file((dir.path() / "t" / "policy.svg").string()).find("since epoch"), std::string::npos);
}

TEST(ReportLint, FlagsUncitedAndStaleNumbers) {
    TempDir dir;
    RunContext ctx(dir.path(), true);
    ctx.write_json("a.json", {{"x", 1.23456}, {"n", 7}});
    ReportBuilder rb(ctx);
    const auto x = rb.cite("a.json", "/x");
    EXPECT_EQ(x, "1.235");
    EXPECT_TRUE(rb.lint("value " + x + " from `a.json`").ok);
    const auto bad = rb.lint("value " + x + " and 42");
    EXPECT_FALSE(bad.ok);
    ASSERT_EQ(bad.violations.size(), 1u);
    EXPECT_NE(bad.violations[0].find("42"), std::string::npos);
    ctx.write_json("a.json", {{"x", 2.0}, {"n", 7}});
    EXPECT_FALSE(rb.lint("value " + x).ok);
    EXPECT_EQ(error_kind_of([&] { rb.cite("a.json", "/missing"); }), ErrorKind::missing_artifact);
    EXPECT_EQ(error_kind_of([&] { rb.cite("b.json", "/x"); }), ErrorKind::missing_artifact);
}

#ifdef SCALEFIT_CLI_PATH
int cli(const std::string& args) {
    const std::string cmd = std::string("\"") + SCALEFIT_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    const auto out = "--out-dir \"" + dir.file("run") + "\" ";
    EXPECT_EQ(cli("--help"), 0);
    EXPECT_EQ(cli("--no-such-flag fit --data x.csv"), 2);
    EXPECT_EQ(cli(out + "fit --data \"" + dir.file("missing.csv") + "\""), 4);
    EXPECT_EQ(cli(out + "--aggregation median fit --data x.csv"), 2);

    save_json_file({{"log_params", {{"a", 5}, {"b", 5}, {"e", 0.5}, {"alpha", -0.2}, {"beta", 0.3}}}},
                   dir.file("degenerate.json"));
    EXPECT_EQ(cli(out + "policy --fit \"" + dir.file("degenerate.json") + "\""), 3);

    detail::write_file(dir.file("bad.csv"), "source_id,n_params\nx,1\n");
    EXPECT_EQ(cli(out + "fit --data \"" + dir.file("bad.csv") + "\""), 2);
}

TEST(Cli, StepsChainThroughRunDirectory) {
    TempDir dir;
    const auto data = write_dataset(dir);
    const auto cfg = dir.file("cfg.json");
    save_json_file(small_config(data, 120), cfg);
    const auto g = "-q --config \"" + cfg + "\" --out-dir \"" + dir.file("run") + "\" ";
    ASSERT_EQ(cli(g + "fit --data \"" + data + "\""), 0);
    ASSERT_EQ(cli(g + "bootstrap --data \"" + data + "\" --resamples 120 --fit fit_no_outliers.json"), 0);
    ASSERT_EQ(cli(g + "test-params --fit fit_no_outliers.json --samples bootstrap_no_outliers_samples.csv"), 0);
    ASSERT_EQ(cli(g + "policy --fit fit_no_outliers.json --samples bootstrap_no_outliers_samples.csv"), 0);
    ASSERT_EQ(cli(g + "report"), 0);
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "report.md"));
    EXPECT_EQ(cli(g + "lrt --ll-null 0 --ll-alt 41.99"), 0);
}
#endif

}  // namespace
}  // namespace scalefit
