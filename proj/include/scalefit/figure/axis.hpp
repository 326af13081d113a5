#pragma once

// Tick-label parsing and axis calibration.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/figure/svg_document.hpp"

namespace scalefit::figure {

namespace detail {

/// Replaces unicode minus signs, superscript digits and thin spaces with ASCII.
inline std::string normalize_label(std::string_view in) {
    static const std::pair<std::string_view, std::string_view> table[] = {
        {"−", "-"}, {"–", "-"}, {"×", "x"}, {"⋅", "x"}, {"·", "x"},
        {"⁰", "^0"}, {"¹", "^1"}, {"²", "^2"}, {"³", "^3"}, {"⁴", "^4"},
        {"⁵", "^5"}, {"⁶", "^6"}, {"⁷", "^7"}, {"⁸", "^8"}, {"⁹", "^9"},
        {"⁻", "^-"}, {" ", ""},   {" ", ""},
    };
    std::string out;
    std::size_t i = 0;
    while (i < in.size()) {
        bool hit = false;
        for (const auto& [from, to] : table) {
            if (in.substr(i, from.size()) == from) {
                out += to;
                i += from.size();
                hit = true;
                break;
            }
        }
        if (hit) continue;
        const char c = in[i++];
        if (c == '$' || c == '{' || c == '}' || c == '\\' || c == ',' ||
            std::isspace(static_cast<unsigned char>(c)))
            continue;
        out += c;
    }
    // "^2^3" from consecutive superscripts -> "^23"; "^-^1" -> "^-1".
    std::string merged;
    for (std::size_t k = 0; k < out.size(); ++k) {
        if (out[k] == '^' && !merged.empty() &&
            (std::isdigit(static_cast<unsigned char>(merged.back())) || merged.back() == '-')) {
            const auto caret = merged.rfind('^');
            if (caret != std::string::npos &&
                merged.find_first_not_of("0123456789-", caret + 1) == std::string::npos)
                continue;
        }
        merged += out[k];
    }
    return merged;
}

}  // namespace detail

/// Parses tick labels such as "100M", "1.5B", "2T", "1e19", "10^19",
/// "10¹⁹", "$10^{19}$", "2x10^9" and plain numbers.
inline std::optional<double> parse_tick_label(std::string_view text) {
    std::string s = detail::normalize_label(text);
    if (s.empty()) return std::nullopt;
    double mult = 1.0;
    switch (s.back()) {
        case 'K': case 'k': mult = 1e3; break;
        case 'M': mult = 1e6; break;
        case 'B': case 'G': mult = 1e9; break;
        case 'T': mult = 1e12; break;
        default: break;
    }
    if (mult != 1.0) s.pop_back();

    double value = 0.0;
    if (const auto caret = s.find('^'); caret != std::string::npos) {
        std::string base = s.substr(0, caret);
        double coeff = 1.0;
        if (const auto x = base.find('x'); x != std::string::npos) {
            auto c = detail::to_number(base.substr(0, x));
            if (!c) return std::nullopt;
            coeff = *c;
            base = base.substr(x + 1);
        }
        const auto b = detail::to_number(base);
        const auto e = detail::to_number(s.substr(caret + 1));
        if (!b || !e) return std::nullopt;
        value = coeff * std::pow(*b, *e);
    } else {
        const auto v = detail::to_number(s);
        if (!v) return std::nullopt;
        value = *v;
    }
    value *= mult;
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

enum class AxisScale { log10, linear };

struct AxisAnchor {
    double coordinate = 0.0;
    double value = 0.0;
};

struct AxisCalibration {
    std::vector<AxisAnchor> anchors;
    AxisScale scale = AxisScale::log10;
    double slope = 0.0;      // d transformed-value / d coordinate
    double intercept = 0.0;
    double max_residual = 0.0;  // in transformed units
    double span = 0.0;          // transformed range covered by the anchors

    double transform(double v) const { return scale == AxisScale::log10 ? std::log10(v) : v; }
    double untransform(double t) const { return scale == AxisScale::log10 ? std::pow(10.0, t) : t; }

    double map(double coordinate) const { return untransform(intercept + slope * coordinate); }
    double inverse(double value) const { return (transform(value) - intercept) / slope; }
};

inline constexpr double max_calibration_residual_fraction = 0.005;

inline AxisCalibration calibrate_axis_anchors(std::vector<AxisAnchor> anchors,
                                              AxisScale scale = AxisScale::log10) {
    if (anchors.size() < 2)
        fail_input(fmt::format("calibrate_axis: need at least 2 anchors, got {}", anchors.size()));
    AxisCalibration cal;
    cal.scale = scale;
    for (const auto& a : anchors) {
        if (!std::isfinite(a.coordinate) || !std::isfinite(a.value))
            fail_input("calibrate_axis: non-finite anchor");
        if (scale == AxisScale::log10 && !(a.value > 0.0))
            fail_input(fmt::format("calibrate_axis: log axis anchor value {} is not positive", a.value));
    }
    std::sort(anchors.begin(), anchors.end(),
              [](const AxisAnchor& l, const AxisAnchor& r) { return l.coordinate < r.coordinate; });
    for (std::size_t i = 1; i < anchors.size(); ++i) {
        if (anchors[i].coordinate == anchors[i - 1].coordinate)
            fail_input(fmt::format("calibrate_axis: two anchors share coordinate {}", anchors[i].coordinate));
        if (anchors[i].value == anchors[i - 1].value)
            fail_input(fmt::format("calibrate_axis: two anchors share value {}", anchors[i].value));
    }
    const bool increasing = anchors[1].value > anchors[0].value;
    for (std::size_t i = 1; i < anchors.size(); ++i)
        if ((anchors[i].value > anchors[i - 1].value) != increasing)
            fail_input("calibrate_axis: anchor values are not monotone in coordinate");

    const double n = static_cast<double>(anchors.size());
    double sx = 0, sy = 0;
    std::vector<double> t(anchors.size());
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        t[i] = cal.transform(anchors[i].value);
        sx += anchors[i].coordinate;
        sy += t[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < anchors.size(); ++i) {
        const double dx = anchors[i].coordinate - mx;
        sxx += dx * dx;
        sxy += dx * (t[i] - my);
    }
    cal.slope = sxy / sxx;
    cal.intercept = my - cal.slope * mx;
    const auto [tmin, tmax] = std::minmax_element(t.begin(), t.end());
    cal.span = *tmax - *tmin;
    for (std::size_t i = 0; i < anchors.size(); ++i)
        cal.max_residual =
            std::max(cal.max_residual, std::abs(cal.intercept + cal.slope * anchors[i].coordinate - t[i]));
    if (cal.max_residual > max_calibration_residual_fraction * cal.span)
        fail_input(fmt::format(
            "calibrate_axis: anchors are not affine (max residual {:.4g} exceeds {:.1f}% of span {:.4g})",
            cal.max_residual, 100.0 * max_calibration_residual_fraction, cal.span));
    cal.anchors = std::move(anchors);
    return cal;
}

struct TickLabel {
    std::string text;
    double coordinate = 0.0;
};

/// Parses every label; unparseable labels (axis titles and the like) are skipped.
inline AxisCalibration calibrate_axis(const std::vector<TickLabel>& ticks,
                                      AxisScale scale = AxisScale::log10) {
    std::vector<AxisAnchor> anchors;
    for (const auto& t : ticks)
        if (auto v = parse_tick_label(t.text)) anchors.push_back({t.coordinate, *v});
    if (anchors.size() < 2)
        fail_input(fmt::format("calibrate_axis: only {} of {} labels parse as numbers", anchors.size(),
                               ticks.size()));
    return calibrate_axis_anchors(std::move(anchors), scale);
}

enum class AxisDirection { horizontal, vertical };

/// Fraction of the font size between a text baseline and its visual center.
inline constexpr double baseline_to_center = 0.35;

struct LabelHarvestOptions {
    AxisDirection direction = AxisDirection::horizontal;
    std::optional<double> center_offset;               // replaces the font-size rule
    std::map<std::string, double> per_label_offset;    // keyed by raw label text
    double default_font_size = 10.0;
};

namespace detail {

inline double font_size(const Element& e, double fallback) {
    for (const Element* p = &e; p; p = p->parent) {
        if (auto fs = p->property("font-size")) {
            if (auto v = to_number(*fs)) return *v;
        }
    }
    return fallback;
}

inline std::optional<std::string> inherited_property(const Element& e, const std::string& name) {
    for (const Element* p = &e; p; p = p->parent)
        if (auto v = p->property(name)) return v;
    return std::nullopt;
}

}  // namespace detail

/// Collects (text, axis coordinate) pairs from the <text> elements under `group`.
/// Horizontal labels are taken at their x attribute, so they should be
/// center-anchored; use per-label offsets otherwise.
/// On vertical axes the anchor is the visual center of the text, which sits
/// about 0.35 em above an alphabetic baseline.
inline std::vector<TickLabel> harvest_labels(const Element& group, const LabelHarvestOptions& opt) {
    std::vector<TickLabel> out;
    SvgDocument::walk(group, [&](const Element& e) {
        if (e.tag != "text") return;
        const Element* pos = &e;
        if (!e.attr("x") && !e.attr("y")) {
            for (const auto& c : e.children)
                if (c.tag == "tspan" && (c.attr("x") || c.attr("y"))) {
                    pos = &c;
                    break;
                }
        }
        auto first = [](const std::string* v) {
            if (!v) return 0.0;
            const auto nums = detail::number_list(*v);
            return nums.empty() ? 0.0 : nums.front();
        };
        double x = first(pos->attr("x"));
        double y = first(pos->attr("y"));
        const std::string text = std::string(detail::trim(e.all_text()));
        if (opt.direction == AxisDirection::vertical) {
            double offset = 0.0;
            if (opt.center_offset) {
                offset = *opt.center_offset;
            } else {
                const auto baseline = detail::inherited_property(*pos, "dominant-baseline");
                const bool centered = baseline && (*baseline == "central" || *baseline == "middle");
                if (!centered) offset = -baseline_to_center * detail::font_size(*pos, opt.default_font_size);
            }
            y += offset;
        }
        if (auto it = opt.per_label_offset.find(text); it != opt.per_label_offset.end()) {
            (opt.direction == AxisDirection::vertical ? y : x) += it->second;
        }
        const auto p = pos->ctm().apply(x, y);
        out.push_back({text, opt.direction == AxisDirection::horizontal ? p[0] : p[1]});
    });
    return out;
}

}  // namespace scalefit::figure
