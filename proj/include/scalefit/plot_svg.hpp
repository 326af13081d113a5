#pragma once

// Small deterministic SVG line and scatter plots.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/policy.hpp"

namespace scalefit::plot {

struct Series {
    std::string label;
    std::string color;
    std::vector<double> x;
    std::vector<double> y;
    bool line = true;
    std::vector<double> band_lo;  // optional shaded band around y
    std::vector<double> band_hi;
};

struct Figure {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
    std::vector<Series> series;
    std::optional<double> hline;  // reference line, e.g. zero residual
    std::string comment;          // emitted as an XML comment when non-empty
};

namespace detail {

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::vector<double> ticks(double lo, double hi, bool log) {
    std::vector<double> out;
    if (log) {
        const int step = std::max(1, static_cast<int>(std::ceil((hi - lo) / 8.0)));
        for (int e = static_cast<int>(std::ceil(lo)); e <= static_cast<int>(std::floor(hi)); e += step)
            out.push_back(e);
        return out;
    }
    const double raw = (hi - lo) / 6.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    double step = mag;
    for (double m : {1.0, 2.0, 5.0, 10.0})
        if (m * mag >= raw) {
            step = m * mag;
            break;
        }
    for (double v = std::ceil(lo / step) * step; v <= hi + 1e-12 * std::abs(hi); v += step) out.push_back(v);
    return out;
}

inline std::string tick_text(double v, bool log) {
    if (log) return fmt::format("1e{}", static_cast<int>(std::lround(v)));
    if (std::abs(v) < 1e-12) return "0";
    return fmt::format("{:.3g}", v);
}

}  // namespace detail

inline std::string render(const Figure& fig) {
    constexpr double W = 720, H = 460, L = 80, R = 170, T = 40, B = 60;
    auto tx = [&](double v) { return fig.log_x ? std::log10(v) : v; };
    auto ty = [&](double v) { return fig.log_y ? std::log10(v) : v; };

    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto add_y = [&](double v) {
        if (std::isfinite(ty(v))) {
            y0 = std::min(y0, ty(v));
            y1 = std::max(y1, ty(v));
        }
    };
    for (const auto& s : fig.series) {
        for (double v : s.x)
            if (std::isfinite(tx(v))) {
                x0 = std::min(x0, tx(v));
                x1 = std::max(x1, tx(v));
            }
        for (double v : s.y) add_y(v);
        for (double v : s.band_lo) add_y(v);
        for (double v : s.band_hi) add_y(v);
    }
    if (fig.hline) add_y(*fig.hline);
    if (!std::isfinite(x0)) x0 = 0, x1 = 1;
    if (!std::isfinite(y0)) y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;
    const double ypad = 0.05 * (y1 - y0);
    y0 -= ypad;
    y1 += ypad;

    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };
    auto f = [](double v) { return fmt::format("{:.2f}", v); };

    std::string s = fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\" "
        "font-family=\"sans-serif\" font-size=\"11\">\n",
        W, H, W, H);
    if (!fig.comment.empty()) s += "<!-- " + detail::escape(fig.comment) + " -->\n";
    s += fmt::format("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"#ffffff\"/>\n", W, H);
    s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
                     f(L + (W - L - R) / 2), detail::escape(fig.title));

    s += "<g id=\"axes\" stroke=\"#000000\" fill=\"none\">\n";
    s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/>\n", L, T, W - L - R, H - T - B);
    s += "</g>\n<g id=\"xlabels\" text-anchor=\"middle\">\n";
    for (double t : detail::ticks(x0, x1, fig.log_x)) {
        const double p = L + (t - x0) / (x1 - x0) * (W - L - R);
        s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#000000\"/>", f(p), H - B,
                         H - B + 5);
        s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", f(p), H - B + 18, detail::tick_text(t, fig.log_x));
    }
    s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n</g>\n", f(L + (W - L - R) / 2), H - 15,
                     detail::escape(fig.x_label));
    s += "<g id=\"ylabels\" text-anchor=\"end\">\n";
    for (double t : detail::ticks(y0, y1, fig.log_y)) {
        const double p = H - B - (t - y0) / (y1 - y0) * (H - T - B);
        s += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"#000000\"/>", L - 5, f(p), L);
        s += fmt::format("<text x=\"{}\" y=\"{}\" dominant-baseline=\"central\">{}</text>\n", L - 8, f(p),
                         detail::tick_text(t, fig.log_y));
    }
    s += fmt::format("<text x=\"20\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 20 {0})\">{1}</text>\n",
                     f(T + (H - T - B) / 2), detail::escape(fig.y_label));
    s += "</g>\n";

    if (fig.hline)
        s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n",
                         L, f(py(*fig.hline)), W - R, f(py(*fig.hline)));

    for (std::size_t k = 0; k < fig.series.size(); ++k) {
        const auto& sr = fig.series[k];
        s += fmt::format("<g id=\"series{}\">\n", k);
        if (!sr.band_lo.empty() && sr.band_lo.size() == sr.x.size() && sr.band_hi.size() == sr.x.size()) {
            std::string pts;
            for (std::size_t i = 0; i < sr.x.size(); ++i) pts += f(px(sr.x[i])) + "," + f(py(sr.band_hi[i])) + " ";
            for (std::size_t i = sr.x.size(); i-- > 0;) pts += f(px(sr.x[i])) + "," + f(py(sr.band_lo[i])) + " ";
            s += fmt::format("<polygon points=\"{}\" fill=\"{}\" fill-opacity=\"0.25\" stroke=\"none\"/>\n", pts,
                             sr.color);
        }
        if (sr.line) {
            std::string pts;
            for (std::size_t i = 0; i < sr.x.size(); ++i)
                if (std::isfinite(ty(sr.y[i]))) pts += f(px(sr.x[i])) + "," + f(py(sr.y[i])) + " ";
            s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n", pts,
                             sr.color);
        } else {
            for (std::size_t i = 0; i < sr.x.size(); ++i)
                if (std::isfinite(ty(sr.y[i])))
                    s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"2.5\" fill=\"{}\" fill-opacity=\"0.7\"/>\n",
                                     f(px(sr.x[i])), f(py(sr.y[i])), sr.color);
        }
        s += "</g>\n";
        const double ly = T + 14 + 18 * static_cast<double>(k);
        s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{}\"/>", W - R + 12, f(ly - 10),
                         sr.color);
        s += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", W - R + 30, f(ly), detail::escape(sr.label));
    }
    s += "</svg>\n";
    return s;
}

/// Tokens-per-parameter versus compute, with the band when present.
inline std::string policy_plot(const std::vector<std::pair<std::string, PolicyCurve>>& curves,
                               const std::string& comment = {}) {
    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
    Figure fig;
    fig.title = "Compute-optimal tokens per parameter";
    fig.x_label = "Training compute (FLOP)";
    fig.y_label = "Tokens per parameter";
    fig.log_x = true;
    fig.log_y = true;
    fig.comment = comment;
    for (std::size_t k = 0; k < curves.size(); ++k) {
        const auto& [name, c] = curves[k];
        Series s;
        s.label = name;
        s.color = palette[k % 4];
        s.x = c.compute;
        for (const auto& o : c.optimum) s.y.push_back(o.ratio);
        if (c.has_band) {
            s.band_lo = c.ratio_lo;
            s.band_hi = c.ratio_hi;
            s.label += fmt::format(" ({:.0f}% band)", 100.0 * c.coverage);
        }
        fig.series.push_back(std::move(s));
    }
    return render(fig);
}

/// Residuals (log predicted - log observed) against training compute.
inline std::string residual_plot(const std::string& title, const std::vector<double>& flop,
                                 const std::vector<double>& residuals, const std::string& color = "#1f77b4",
                                 const std::string& comment = {}) {
    Figure fig;
    fig.title = title;
    fig.x_label = "Training compute (FLOP)";
    fig.y_label = "log predicted - log observed loss";
    fig.log_x = true;
    fig.hline = 0.0;
    fig.comment = comment;
    Series s;
    s.label = "residual";
    s.color = color;
    s.x = flop;
    s.y = residuals;
    s.line = false;
    fig.series.push_back(std::move(s));
    return render(fig);
}

}  // namespace scalefit::plot
