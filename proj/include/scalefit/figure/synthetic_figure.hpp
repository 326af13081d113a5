#pragma once

// Synthetic scatter figures with a known ground truth. Points sit on log
// axes (x = FLOP, y = parameters by default), colored from a 256-step ramp
// on a log loss scale, with a color bar and tick labels in separate groups.

#include <cmath>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "scalefit/core.hpp"
#include "scalefit/figure/color_scale.hpp"
#include "scalefit/figure/extract.hpp"

namespace scalefit::figure {

enum class MarkerShape { circle, rect, use, path };
enum class LabelStyle { e_notation, caret, superscript, latex, suffix };
enum class BaselineStyle { alphabetic, central };

struct FigureStyle {
    MarkerShape marker = MarkerShape::circle;
    LabelStyle x_labels = LabelStyle::e_notation;
    LabelStyle y_labels = LabelStyle::suffix;
    BaselineStyle y_baseline = BaselineStyle::alphabetic;
    ColorbarKind colorbar = ColorbarKind::rects;
    ScaleOrientation orientation = ScaleOrientation::top_is_max;
    double value_min = 2.0;
    double value_max = 5.0;
    std::size_t ramp_size = 256;
    bool group_transforms = true;  // wrap groups in translate/scale transforms
    double font_size = 10.0;
    int coordinate_decimals = -1;  // < 0 writes shortest round-trip coordinates
};

/// Distinct colors along an HSV hue sweep; index 0 is the top of the bar.
inline std::vector<Rgb> hue_ramp(std::size_t size) {
    std::vector<Rgb> out;
    for (std::size_t i = 0; i < size; ++i) {
        const double h = 300.0 * static_cast<double>(i) / static_cast<double>(std::max<std::size_t>(size - 1, 1));
        const double seg = h / 60.0;
        const int k = std::min(static_cast<int>(seg), 4);
        const int up = static_cast<int>(std::lround(255.0 * (seg - k)));
        const int down = 255 - up;
        switch (k) {
            case 0: out.push_back({255, up, 0}); break;
            case 1: out.push_back({down, 255, 0}); break;
            case 2: out.push_back({0, 255, up}); break;
            case 3: out.push_back({0, down, 255}); break;
            default: out.push_back({up, 0, 255}); break;
        }
    }
    return out;
}

struct SyntheticFigure {
    std::string svg;
    ExtractConfig config;  // what an extractor needs to read this figure back
    std::vector<std::size_t> color_index;  // ramp index used for each observation
    double log_step = 0.0;                 // log-value spacing between ramp entries
};

namespace detail {

inline std::string format_label(double decade, LabelStyle style) {
    const int e = static_cast<int>(std::lround(decade));
    switch (style) {
        case LabelStyle::e_notation: return fmt::format("1e{}", e);
        case LabelStyle::caret: return fmt::format("10^{}", e);
        case LabelStyle::latex: return fmt::format("$10^{{{}}}$", e);
        case LabelStyle::superscript: {
            static const char* sup[] = {"⁰", "¹", "²", "³", "⁴", "⁵", "⁶", "⁷", "⁸", "⁹"};
            std::string s = "10";
            if (e < 0) s += "⁻";
            for (char c : std::to_string(std::abs(e))) s += sup[c - '0'];
            return s;
        }
        case LabelStyle::suffix: {
            static const std::pair<int, const char*> units[] = {{12, "T"}, {9, "B"}, {6, "M"}, {3, "K"}};
            for (const auto& [p, u] : units)
                if (e >= p) return fmt::format("{}{}", static_cast<long long>(std::llround(std::pow(10.0, e - p))), u);
            return fmt::format("{}", static_cast<long long>(std::llround(std::pow(10.0, e))));
        }
    }
    return {};
}

}  // namespace detail

/// Renders `data` as a scatter figure. Axis ranges cover whole decades around
/// the data. Losses outside [value_min, value_max] are clamped onto the ramp.
inline SyntheticFigure generate_synthetic_figure(const Dataset& data, const FigureStyle& style = {}) {
    data.validate();
    if (data.empty()) fail_input("generate_synthetic_figure: dataset is empty");
    if (style.ramp_size < 2 || style.ramp_size > max_scale_entries)
        fail_input("generate_synthetic_figure: ramp size must be in [2, 256]");

    auto num = [&](double v) {
        if (style.coordinate_decimals < 0) return fmt::format("{}", v);
        return fmt::format("{:.{}f}", v, style.coordinate_decimals);
    };

    double fmin = INFINITY, fmax = -INFINITY, nmin = INFINITY, nmax = -INFINITY;
    for (const auto& o : data.observations) {
        fmin = std::min(fmin, std::log10(o.flop));
        fmax = std::max(fmax, std::log10(o.flop));
        nmin = std::min(nmin, std::log10(o.n_params));
        nmax = std::max(nmax, std::log10(o.n_params));
    }
    const double x_lo = std::floor(fmin), x_hi = std::max(std::ceil(fmax), x_lo + 1.0);
    const double y_lo = std::floor(nmin), y_hi = std::max(std::ceil(nmax), y_lo + 1.0);
    constexpr double px0 = 80.0, px1 = 680.0, py_top = 40.0, py_bottom = 440.0;
    auto xpix = [&](double flop) { return px0 + (std::log10(flop) - x_lo) / (x_hi - x_lo) * (px1 - px0); };
    auto ypix = [&](double n) {
        return py_bottom - (std::log10(n) - y_lo) / (y_hi - y_lo) * (py_bottom - py_top);
    };

    const auto ramp = hue_ramp(style.ramp_size);
    const double lmin = std::log(style.value_min), lmax = std::log(style.value_max);
    const double step = (lmax - lmin) / static_cast<double>(style.ramp_size - 1);
    auto ramp_index = [&](double loss) {
        const double t = std::clamp((std::log(loss) - lmin) / step, 0.0, static_cast<double>(style.ramp_size - 1));
        const auto from_bottom = static_cast<std::size_t>(std::lround(t));
        return style.orientation == ScaleOrientation::top_is_max ? style.ramp_size - 1 - from_bottom : from_bottom;
    };

    SyntheticFigure fig;
    fig.log_step = step;
    std::string s;
    s += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" xmlns:xlink=\"http://www.w3.org/1999/xlink\" "
         "width=\"800\" height=\"500\" viewBox=\"0 0 800 500\">\n";
    if (style.marker == MarkerShape::use)
        s += "<defs><circle id=\"marker\" cx=\"0\" cy=\"0\" r=\"3\"/></defs>\n";

    // Points: optionally inside a translated, scaled group to exercise transforms.
    const double tx = style.group_transforms ? 15.0 : 0.0, ty = style.group_transforms ? -7.0 : 0.0;
    const double sc = style.group_transforms ? 2.0 : 1.0;
    s += "<g id=\"figure\">\n";
    s += style.group_transforms
             ? fmt::format("<g id=\"points\" transform=\"translate({} {}) scale({})\">\n", tx, ty, sc)
             : std::string("<g id=\"points\">\n");
    for (const auto& o : data.observations) {
        const std::size_t k = ramp_index(o.loss);
        fig.color_index.push_back(k);
        const std::string fill = ramp[k].hex();
        const double cx = (xpix(o.flop) - tx) / sc, cy = (ypix(o.n_params) - ty) / sc;
        switch (style.marker) {
            case MarkerShape::circle:
                s += fmt::format("<circle cx=\"{}\" cy=\"{}\" r=\"1.5\" fill=\"{}\"/>\n", num(cx), num(cy), fill);
                break;
            case MarkerShape::rect:
                s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"3\" height=\"2\" style=\"fill:{};stroke:none\"/>\n",
                                 num(cx - 1.5), num(cy - 1.0), fill);
                break;
            case MarkerShape::use:
                s += fmt::format("<use xlink:href=\"#marker\" x=\"{}\" y=\"{}\" fill=\"{}\"/>\n", num(cx), num(cy),
                                 fill);
                break;
            case MarkerShape::path:
                s += fmt::format("<g fill=\"{}\"><path d=\"M{} {}l2 -2l2 2l-2 2z\"/></g>\n", fill, num(cx - 2.0),
                                 num(cy));
                break;
        }
    }
    s += "</g>\n";

    const double fs = style.font_size;
    s += fmt::format("<g id=\"xlabels\" font-size=\"{}\">\n", fs);
    for (double d = x_lo; d <= x_hi + 0.5; d += 1.0)
        s += fmt::format("<text x=\"{}\" y=\"460\" text-anchor=\"middle\">{}</text>\n",
                         num(px0 + (d - x_lo) / (x_hi - x_lo) * (px1 - px0)), detail::format_label(d, style.x_labels));
    s += "<text x=\"380\" y=\"485\" text-anchor=\"middle\">Training FLOP</text>\n</g>\n";

    const double ly = style.group_transforms ? 5.0 : 0.0;
    s += style.group_transforms
             ? fmt::format("<g id=\"ylabels\" font-size=\"{}\" transform=\"translate(0 {})\">\n", fs, ly)
             : fmt::format("<g id=\"ylabels\" font-size=\"{}\">\n", fs);
    for (double d = y_lo; d <= y_hi + 0.5; d += 1.0) {
        const double y = py_bottom - (d - y_lo) / (y_hi - y_lo) * (py_bottom - py_top) - ly;
        if (style.y_baseline == BaselineStyle::central)
            s += fmt::format("<text x=\"70\" y=\"{}\" text-anchor=\"end\" dominant-baseline=\"central\">{}</text>\n",
                             num(y), detail::format_label(d, style.y_labels));
        else
            s += fmt::format("<text x=\"70\" y=\"{}\" text-anchor=\"end\"><tspan>{}</tspan></text>\n",
                             num(y + baseline_to_center * fs), detail::format_label(d, style.y_labels));
    }
    s += "</g>\n";

    // Color bar: ramp index 0 at the top.
    const double bar_top = 40.0, bar_h = 400.0, cell = bar_h / static_cast<double>(style.ramp_size);
    s += "<g id=\"colorbar\">\n";
    switch (style.colorbar) {
        case ColorbarKind::rects:
        case ColorbarKind::automatic:
            for (std::size_t i = 0; i < style.ramp_size; ++i)
                s += fmt::format("<rect x=\"720\" y=\"{}\" width=\"15\" height=\"{}\" fill=\"{}\"/>\n",
                                 num(bar_top + cell * static_cast<double>(i)), num(cell), ramp[i].hex());
            break;
        case ColorbarKind::gradient:
            s += "<defs><linearGradient id=\"cbar\" x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\">\n";
            for (std::size_t i = 0; i < style.ramp_size; ++i)
                s += fmt::format("<stop offset=\"{}\" stop-color=\"{}\"/>\n",
                                 static_cast<double>(i) / static_cast<double>(style.ramp_size - 1), ramp[i].hex());
            s += "</linearGradient></defs>\n";
            s += fmt::format("<rect x=\"720\" y=\"{}\" width=\"15\" height=\"{}\" fill=\"url(#cbar)\"/>\n", bar_top,
                             bar_h);
            break;
        case ColorbarKind::image: {
            RgbImage img;
            img.width = 4;
            img.height = static_cast<std::uint32_t>(style.ramp_size);
            for (std::size_t i = 0; i < style.ramp_size; ++i)
                for (int x = 0; x < 4; ++x) {
                    img.rgb.push_back(static_cast<std::uint8_t>(ramp[i].r));
                    img.rgb.push_back(static_cast<std::uint8_t>(ramp[i].g));
                    img.rgb.push_back(static_cast<std::uint8_t>(ramp[i].b));
                }
            s += fmt::format(
                "<image x=\"720\" y=\"{}\" width=\"15\" height=\"{}\" preserveAspectRatio=\"none\" "
                "xlink:href=\"data:image/png;base64,{}\"/>\n",
                bar_top, bar_h, encode_base64(encode_png(img)));
            break;
        }
    }
    s += fmt::format("<text x=\"740\" y=\"35\">{:.2f}</text>\n", style.orientation == ScaleOrientation::top_is_max
                                                                      ? style.value_max
                                                                      : style.value_min);
    s += "</g>\n</g>\n</svg>\n";
    fig.svg = std::move(s);

    fig.config.orientation = style.orientation;
    fig.config.value_min = style.value_min;
    fig.config.value_max = style.value_max;
    fig.config.colorbar_kind = style.colorbar == ColorbarKind::automatic ? ColorbarKind::rects : style.colorbar;
    return fig;
}

}  // namespace scalefit::figure
