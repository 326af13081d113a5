#pragma once

// Markdown report rendered purely from run artifacts. Every number goes
// through ReportBuilder::cite, which records where it came from; the lint
// pass re-reads each source and rejects any number that was not cited.

#include <map>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/pipeline.hpp"

namespace scalefit {

struct Citation {
    std::string artifact;
    std::string pointer;
    std::string format;
    std::string text;
};

struct LintResult {
    bool ok = true;
    std::vector<std::string> violations;
    std::size_t citations = 0;
    std::size_t numbers_checked = 0;
};

namespace detail {

inline std::string format_value(const json& v, const std::string& spec) {
    if (v.is_number_unsigned()) return fmt::format("{}", v.get<unsigned long long>());
    if (v.is_number_integer()) return fmt::format("{}", v.get<long long>());
    if (v.is_number()) return fmt::format(fmt::runtime(spec), v.get<double>());
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    if (v.is_string()) return v.get<std::string>();
    fail_input("report: cited value is not a scalar");
}

/// Numeric tokens outside `code spans` and link targets.
inline std::vector<std::string> numeric_tokens(const std::string& text) {
    std::string visible;
    bool code = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '`') {
            code = !code;
            visible += ' ';
            continue;
        }
        if (!code && c == ']' && i + 1 < text.size() && text[i + 1] == '(') {
            const auto close = text.find(')', i);
            if (close != std::string::npos) {
                i = close;
                visible += ' ';
                continue;
            }
        }
        visible += code ? ' ' : c;
    }
    static const std::regex number(R"(\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)");
    std::vector<std::string> out;
    for (std::sregex_iterator it(visible.begin(), visible.end(), number), end; it != end; ++it)
        out.push_back(it->str());
    return out;
}

}  // namespace detail

class ReportBuilder {
public:
    explicit ReportBuilder(const RunContext& ctx) : ctx_(ctx) {}

    bool has(const std::string& artifact) const { return fs::exists(ctx_.path(artifact)); }

    const json& load(const std::string& artifact) {
        auto it = cache_.find(artifact);
        if (it != cache_.end()) return it->second;
        if (!has(artifact)) fail_missing(fmt::format("report: artifact '{}' is missing", artifact));
        return cache_.emplace(artifact, load_json_file(ctx_.path(artifact).string())).first->second;
    }

    bool has_value(const std::string& artifact, const std::string& pointer) {
        if (!has(artifact)) return false;
        const auto& j = load(artifact);
        const json::json_pointer p(pointer);
        return j.contains(p) && !j.at(p).is_null();
    }

    std::string cite(const std::string& artifact, const std::string& pointer, const std::string& spec = "{:.4g}") {
        const auto& j = load(artifact);
        const json::json_pointer p(pointer);
        if (!j.contains(p)) fail_missing(fmt::format("report: {} has no value at {}", artifact, pointer));
        auto text = detail::format_value(j.at(p), spec);
        citations_.push_back({artifact, pointer, spec, text});
        return text;
    }

    /// Cites when present, otherwise "n/a".
    std::string cite_or_na(const std::string& artifact, const std::string& pointer, const std::string& spec = "{:.4g}") {
        return has_value(artifact, pointer) ? cite(artifact, pointer, spec) : "n/a";
    }

    const std::vector<Citation>& citations() const { return citations_; }

    LintResult lint(const std::string& report) const {
        LintResult r;
        r.citations = citations_.size();
        std::set<std::string> allowed;
        for (const auto& c : citations_) {
            const auto fresh = load_json_file(ctx_.path(c.artifact).string());
            const json::json_pointer p(c.pointer);
            const auto again = fresh.contains(p) ? detail::format_value(fresh.at(p), c.format) : std::string("<missing>");
            if (again != c.text)
                r.violations.push_back(fmt::format("{}{}: report shows '{}', artifact gives '{}'", c.artifact,
                                                   c.pointer, c.text, again));
            for (const auto& t : detail::numeric_tokens(c.text)) allowed.insert(t);
        }
        for (const auto& t : detail::numeric_tokens(report)) {
            ++r.numbers_checked;
            if (!allowed.count(t)) r.violations.push_back(fmt::format("number '{}' is not traceable to an artifact", t));
        }
        r.ok = r.violations.empty();
        return r;
    }

private:
    const RunContext& ctx_;
    std::map<std::string, json> cache_;
    std::vector<Citation> citations_;
};

namespace detail {

inline void parameter_table(std::string& md, ReportBuilder& rb, const std::string& variant, bool& flagged_se) {
    const std::string fitf = "fit_" + variant + ".json";
    const std::string bootf = "bootstrap_" + variant + ".json";
    const std::string testf = "tests_" + variant + ".json";
    const bool boot = rb.has(bootf);
    const bool tests = rb.has(testf);
    md += fmt::format("Fit on {} points ({} outliers dropped), objective {}.\n\n",
                      rb.cite(fitf, "/n_observations"), rb.cite(fitf, "/dropped_outliers"),
                      rb.cite(fitf, "/objective", "{:.6g}"));
    std::string header = "| Parameter | Our estimate |";
    std::string rule = "|---|---|";
    if (boot) {
        header += " SE |";
        rule += "---|";
    }
    if (tests) {
        header += " Reference (unrounded) |";
        rule += "---|";
    }
    md += header + "\n" + rule + "\n";
    static const std::pair<const char*, const char*> rows[] = {
        {"E", "{:.4f}"}, {"A", "{:.2f}"}, {"B", "{:.2f}"}, {"alpha", "{:.4f}"}, {"beta", "{:.4f}"}};
    for (const auto& [name, spec] : rows) {
        std::string line = fmt::format("| {} | {} |", name, rb.cite_or_na(fitf, std::string("/params/") + name, spec));
        if (boot) line += fmt::format(" {} |", rb.cite(bootf, std::string("/natural/") + name + "/se", spec));
        if (tests) line += fmt::format(" {} |", rb.cite(testf, std::string("/per_parameter/") + name + "/reference", spec));
        md += line + "\n";
    }
    std::string line = fmt::format("| a_policy | {} |", rb.cite_or_na(fitf, "/a_policy", "{:.4f}"));
    if (boot) line += fmt::format(" {} |", rb.cite(bootf, "/a_policy/se", "{:.4f}"));
    if (tests) line += fmt::format(" {} |", rb.has_value("policy_summary.json", "/hoffmann_unrounded/a_policy")
                                                 ? rb.cite("policy_summary.json", "/hoffmann_unrounded/a_policy", "{:.4f}")
                                                 : "n/a");
    md += line + "\n\n";
    if (boot)
        md += fmt::format("Standard errors from {} bootstrap resamples (seed {}, {} grid fallbacks).\n\n",
                          rb.cite(bootf, "/kept"), rb.cite(bootf, "/seed"), rb.cite(bootf, "/grid_fallbacks"));
    else
        flagged_se = true;
}

}  // namespace detail

struct ReportOutput {
    std::string markdown;
    LintResult lint;
    std::set<std::string> sources;  // artifacts cited at least once
};

inline ReportOutput build_report(const RunContext& ctx) {
    ReportBuilder rb(ctx);
    std::string md = "# Scaling-law fit report\n\n";
    bool flagged_se = false;

    for (const auto& [variant, title] : {std::pair{"no_outliers", "Parameter estimates, outliers dropped"},
                                         std::pair{"with_outliers", "Parameter estimates, outliers kept"}}) {
        if (!rb.has(std::string("fit_") + variant + ".json")) continue;
        md += fmt::format("## {}\n\n", title);
        detail::parameter_table(md, rb, variant, flagged_se);
    }
    if (flagged_se)
        md += "> **Flag:** no bootstrap artifacts in this run, so standard errors are not shown.\n\n";

    const bool any_tests = rb.has("tests_no_outliers.json") || rb.has("tests_with_outliers.json");
    if (any_tests) {
        md += "## Equality tests against the unrounded reference\n\n";
        md += "| Covariance from | Statistic | dof | p-value | Condition number |\n|---|---|---|---|---|\n";
        for (const auto& [variant, label] : {std::pair{"no_outliers", "bootstrap without outliers"},
                                             std::pair{"with_outliers", "bootstrap with outliers"}}) {
            const std::string f = std::string("tests_") + variant + ".json";
            if (!rb.has(f)) continue;
            md += fmt::format("| {} | {} | {} | {} | {} |\n", label, rb.cite(f, "/chi2/statistic", "{:.2f}"),
                              rb.cite(f, "/chi2/dof"), rb.cite(f, "/chi2/p_value", "{:.3g}"),
                              rb.cite(f, "/chi2/condition_number", "{:.3g}"));
        }
        md += "\n";
        const std::string f = rb.has("tests_no_outliers.json") ? "tests_no_outliers.json" : "tests_with_outliers.json";
        md += "Per-parameter tests (normal approximation and bootstrap percentile):\n\n";
        md += "| Parameter | z | p (normal) | p (percentile) |\n|---|---|---|---|\n";
        for (const char* name : {"E", "A", "B", "alpha", "beta"}) {
            const std::string base = std::string("/per_parameter/") + name;
            md += fmt::format("| {} | {} | {} | {} |\n", name, rb.cite(f, base + "/statistic", "{:.3f}"),
                              rb.cite(f, base + "/p_value", "{:.3g}"), rb.cite(f, base + "/p_percentile", "{:.3g}"));
        }
        md += "\n";
    }

    const bool ll_a = rb.has("loglik_no_outliers.json"), ll_b = rb.has("loglik_with_outliers.json");
    if (ll_a || ll_b) {
        md += "## Log-likelihoods\n\n| Parameters |";
        std::string rule = "|---|";
        if (ll_a) md += " Outliers dropped |", rule += "---|";
        if (ll_b) md += " Outliers kept |", rule += "---|";
        md += "\n" + rule + "\n";
        auto row = [&](const std::string& label, const std::string& ptr, const std::string& spec) {
            std::string line = "| " + label + " |";
            if (ll_a) line += " " + rb.cite("loglik_no_outliers.json", ptr, spec) + " |";
            if (ll_b) line += " " + rb.cite("loglik_with_outliers.json", ptr, spec) + " |";
            md += line + "\n";
        };
        row("Reference, rounded", "/hoffmann_rounded/log_likelihood", "{:.2f}");
        row("Reference, unrounded", "/hoffmann_unrounded/log_likelihood", "{:.2f}");
        row("Our fit (joint scale)", "/ours/log_likelihood", "{:.2f}");
        row("LR statistic vs unrounded", "/lr_vs_unrounded/statistic", "{:.2f}");
        row("LR p-value vs unrounded", "/lr_vs_unrounded/p_value", "{:.3g}");
        row("LR p-value vs rounded", "/lr_vs_rounded/p_value", "{:.3g}");
        md += "\n";
    }

    if (rb.has("gof.json")) {
        md += "## Goodness of fit\n\n";
        md += "| Comparison | Rounded reference | Unrounded reference |\n|---|---|---|\n";
        md += fmt::format("| Share of our Huber losses below their median | {} | {} |\n",
                          rb.cite("gof.json", "/hoffmann_rounded/fraction_ours_below_their_median", "{:.3f}"),
                          rb.cite("gof.json", "/hoffmann_unrounded/fraction_ours_below_their_median", "{:.3f}"));
        md += fmt::format("| Share of points where our loss is lower | {} | {} |\n",
                          rb.cite("gof.json", "/hoffmann_rounded/fraction_ours_lower", "{:.3f}"),
                          rb.cite("gof.json", "/hoffmann_unrounded/fraction_ours_lower", "{:.3f}"));
        md += fmt::format("| Their mean residual (SE) | {} ({}) | {} ({}) |\n\n",
                          rb.cite("gof.json", "/hoffmann_rounded/mean_residual", "{:.4g}"),
                          rb.cite("gof.json", "/hoffmann_rounded/se_mean_residual", "{:.2g}"),
                          rb.cite("gof.json", "/hoffmann_unrounded/mean_residual", "{:.4g}"),
                          rb.cite("gof.json", "/hoffmann_unrounded/se_mean_residual", "{:.2g}"));
        md += fmt::format("Our mean residual is {} (SE {}).\n\n", rb.cite("gof.json", "/ours/mean_residual", "{:.4g}"),
                          rb.cite("gof.json", "/ours/se_mean_residual", "{:.2g}"));
        md += "![Our residuals](residuals_ours.svg)\n![Rounded reference residuals](residuals_hoffmann_rounded.svg)\n"
              "![Unrounded reference residuals](residuals_hoffmann_unrounded.svg)\n\n";
    }

    if (rb.has("policy_summary.json")) {
        const std::string f = "policy_summary.json";
        md += "## Compute-optimal allocation\n\n";
        md += "| Quantity | Our fit | Unrounded reference |\n|---|---|---|\n";
        md += fmt::format("| a_policy | {} | {} |\n", rb.cite(f, "/ours/a_policy", "{:.4f}"),
                          rb.cite(f, "/hoffmann_unrounded/a_policy", "{:.4f}"));
        for (const char* key : {"reference_model", "extrapolation"}) {
            const std::string base = std::string("/") + key;
            std::string ours = rb.cite(f, "/ours" + base + "/ratio", "{:.2f}");
            if (rb.has_value(f, "/ours" + base + "/band_lo"))
                ours += fmt::format(" [{}, {}]", rb.cite(f, "/ours" + base + "/band_lo", "{:.2f}"),
                                    rb.cite(f, "/ours" + base + "/band_hi", "{:.2f}"));
            md += fmt::format("| Tokens per parameter at C = {} FLOP | {} | {} |\n",
                              rb.cite(f, "/ours" + base + "/compute", "{:.3g}"), ours,
                              rb.cite(f, "/hoffmann_unrounded" + base + "/ratio", "{:.2f}"));
        }
        if (rb.has_value(f, "/band_samples"))
            md += fmt::format("\nBands are pointwise intervals with coverage {} over {} bootstrap fits.\n",
                              rb.cite(f, "/coverage", "{:.2f}"), rb.cite(f, "/band_samples"));
        md += "\n![Tokens per parameter](policy.svg)\n\n";
    }

    md += "## Provenance\n\nAll numbers above are read from the JSON artifacts listed in `manifest.json`.\n";
    auto lint = rb.lint(md);
    std::set<std::string> sources;
    for (const auto& c : rb.citations()) sources.insert(c.artifact);
    return {md, lint, sources};
}

inline LintResult step_report(RunContext& ctx) {
    Manifest checked = ctx.manifest();
    std::erase_if(checked.steps, [](const StepRecord& s) { return s.name == "report"; });
    verify_manifest(checked, ctx);

    auto out = build_report(ctx);
    StepRecord rec{"report", {}, {}, json::object()};
    for (const auto& p : out.sources) rec.inputs.push_back(ctx.input(p));
    rec.outputs.push_back(ctx.write("report.md", out.markdown));
    json lint{{"ok", out.lint.ok},
              {"citations", out.lint.citations},
              {"numbers_checked", out.lint.numbers_checked},
              {"violations", out.lint.violations}};
    rec.outputs.push_back(ctx.write_json("report_lint.json", lint));
    ctx.record(std::move(rec));
    if (!out.lint.ok)
        fail_numerical(fmt::format("report lint failed: {}", out.lint.violations.front()));
    return out.lint;
}

}  // namespace scalefit
