#pragma once

// Scatter-figure extraction: points, axes and color scale to a Dataset.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "scalefit/core.hpp"
#include "scalefit/figure/axis.hpp"
#include "scalefit/figure/color_scale.hpp"
#include "scalefit/figure/svg_document.hpp"

namespace scalefit::figure {

struct ExtractedPoint {
    double svg_x = 0.0;
    double svg_y = 0.0;
    std::string fill_hex;
    Rgb fill;
    double n_params = 0.0;
    double flop = 0.0;
    double loss = 0.0;
};

/// One ExtractedPoint per point shape under the group, in document order.
/// Shapes inside <defs> are templates, not data, and are skipped.
inline std::vector<ExtractedPoint> parse_svg_points(const SvgDocument& doc, const std::string& group_selector) {
    const Element& group = doc.select_one(group_selector);
    std::vector<ExtractedPoint> out;
    auto visit = [&](auto&& self, const Element& e) -> void {
        if (e.tag == "defs") return;
        if (&e != &group && is_point_shape(e)) {
            const auto center = local_center(e, doc);
            if (!center) fail_input(fmt::format("point <{}> has no resolvable center", e.tag));
            const auto fill = resolve_shape_fill(e, doc);
            if (!fill) {
                const auto* id = e.attr("id");
                fail_input(fmt::format("point <{}{}> at ({}, {}) has no resolvable fill", e.tag,
                                       id ? " id=" + *id : std::string(), (*center)[0], (*center)[1]));
            }
            const auto p = e.ctm().apply((*center)[0], (*center)[1]);
            ExtractedPoint pt;
            pt.svg_x = p[0];
            pt.svg_y = p[1];
            pt.fill = *fill;
            pt.fill_hex = fill->hex();
            out.push_back(std::move(pt));
            return;
        }
        for (const auto& c : e.children) self(self, c);
    };
    visit(visit, group);
    return out;
}

inline std::vector<ExtractedPoint> parse_svg_points(const std::string& svg_text, const std::string& group_selector) {
    return parse_svg_points(SvgDocument::parse(svg_text), group_selector);
}

enum class Quantity { flop, n_params, tokens };

inline Quantity quantity_from_string(const std::string& s) {
    if (s == "flop" || s == "compute") return Quantity::flop;
    if (s == "n_params" || s == "params") return Quantity::n_params;
    if (s == "tokens") return Quantity::tokens;
    fail_input("unknown axis quantity '" + s + "' (expected flop, n_params or tokens)");
}

inline const char* to_string(Quantity q) {
    switch (q) {
        case Quantity::flop: return "flop";
        case Quantity::n_params: return "n_params";
        case Quantity::tokens: return "tokens";
    }
    return "unknown";
}

struct PointDiagnostic {
    std::size_t document_index = 0;
    std::string fill_hex;
    std::string matched_hex;
    double color_distance = 0.0;
};

struct ExtractionDiagnostics {
    std::vector<PointDiagnostic> points;  // aligned with the output dataset
    double max_color_distance = 0.0;
    std::size_t exact_color_matches = 0;
    std::vector<std::pair<std::size_t, std::size_t>> duplicates;  // document indices
    double x_calibration_residual = 0.0;
    double y_calibration_residual = 0.0;
    std::size_t scale_entries = 0;
};

struct DecodeOptions {
    Quantity x_quantity = Quantity::flop;
    Quantity y_quantity = Quantity::n_params;
    double flop_multiplier = default_flop_multiplier;
    std::string id_prefix = "pt";
};

struct DecodedFigure {
    Dataset dataset;
    std::vector<ExtractedPoint> points;  // same order as the dataset
    ExtractionDiagnostics diagnostics;
};

/// Maps raw points through the axis calibrations and the color scale. Output
/// is sorted by (flop, n_params, loss) so it does not depend on document order.
inline DecodedFigure decode_points(const std::vector<ExtractedPoint>& raw, const AxisCalibration& x_axis,
                                   const AxisCalibration& y_axis, const ColorScale& scale,
                                   const DecodeOptions& opt = {}) {
    if (scale.entries.empty()) fail_input("decode_points: color scale is empty");
    if (opt.x_quantity == opt.y_quantity)
        fail_input(fmt::format("decode_points: both axes are '{}'", to_string(opt.x_quantity)));
    const bool has_flop = opt.x_quantity == Quantity::flop || opt.y_quantity == Quantity::flop;
    const bool has_n = opt.x_quantity == Quantity::n_params || opt.y_quantity == Quantity::n_params;

    struct Row {
        ExtractedPoint pt;
        PointDiagnostic diag;
        double tokens;
    };
    std::vector<Row> rows;
    std::vector<std::string> bad;
    const double eps = std::exp(scale.log_step());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ExtractedPoint p = raw[i];
        const double xv = x_axis.map(p.svg_x), yv = y_axis.map(p.svg_y);
        double n = 0.0, flop = 0.0, tokens = 0.0;
        auto assign = [&](Quantity q, double v) {
            (q == Quantity::flop ? flop : q == Quantity::n_params ? n : tokens) = v;
        };
        assign(opt.x_quantity, xv);
        assign(opt.y_quantity, yv);
        if (!has_flop) flop = opt.flop_multiplier * n * tokens;
        if (!has_n) n = flop / (opt.flop_multiplier * tokens);
        if (has_flop && has_n) tokens = flop / (opt.flop_multiplier * n);
        const auto m = scale.lookup(p.fill);
        p.n_params = n;
        p.flop = flop;
        p.loss = m.value;
        if (!positive_finite(n) || !positive_finite(flop) || !positive_finite(tokens) || !positive_finite(m.value) ||
            m.value < scale.value_min / eps || m.value > scale.value_max * eps) {
            bad.push_back(fmt::format("#{} at ({}, {}): n_params={}, flop={}, loss={}", i, p.svg_x, p.svg_y, n, flop,
                                      m.value));
            continue;
        }
        rows.push_back({p, {i, p.fill_hex, scale.entries[m.index].color.hex(), m.distance}, tokens});
    }
    if (!bad.empty()) {
        std::string msg = fmt::format("decode_points: {} point(s) decode to invalid values:", bad.size());
        for (const auto& b : bad) msg += "\n  " + b;
        fail_input(msg);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return std::tie(a.pt.flop, a.pt.n_params, a.pt.loss) < std::tie(b.pt.flop, b.pt.n_params, b.pt.loss);
    });

    DecodedFigure out;
    out.diagnostics.x_calibration_residual = x_axis.max_residual;
    out.diagnostics.y_calibration_residual = y_axis.max_residual;
    out.diagnostics.scale_entries = scale.entries.size();
    const int width = std::max<int>(3, static_cast<int>(std::to_string(rows.size()).size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        out.dataset.observations.push_back(RunObservation{fmt::format("{}{:0{}}", opt.id_prefix, k, width),
                                                          r.pt.n_params, r.pt.flop, r.tokens, r.pt.loss});
        out.points.push_back(r.pt);
        out.diagnostics.points.push_back(r.diag);
        out.diagnostics.max_color_distance = std::max(out.diagnostics.max_color_distance, r.diag.color_distance);
        if (r.diag.color_distance == 0.0) ++out.diagnostics.exact_color_matches;
    }
    // Same position and fill: overlapping markers are kept but reported.
    std::map<std::tuple<double, double, std::string>, std::size_t> seen;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto key = std::make_tuple(raw[i].svg_x, raw[i].svg_y, raw[i].fill_hex);
        auto [it, inserted] = seen.emplace(key, i);
        if (!inserted) out.diagnostics.duplicates.emplace_back(it->second, i);
    }
    return out;
}

struct ExtractConfig {
    std::string points_selector = "#points";
    std::string x_labels_selector = "#xlabels";
    std::string y_labels_selector = "#ylabels";
    std::string colorbar_selector = "#colorbar";
    ColorbarKind colorbar_kind = ColorbarKind::automatic;
    std::optional<ScaleOrientation> orientation;  // required before extraction
    double value_min = 2.0;
    double value_max = 5.0;
    AxisScale x_scale = AxisScale::log10;
    AxisScale y_scale = AxisScale::log10;
    std::vector<AxisAnchor> x_anchors;  // when set, replace the harvested labels
    std::vector<AxisAnchor> y_anchors;
    std::optional<double> y_label_center_offset;
    std::map<std::string, double> label_offsets;
    DecodeOptions decode;

    void validate() const {
        if (!orientation)
            fail_input("extract config: color-scale orientation is required (top_is_max or top_is_min)");
        if (!positive_finite(value_min) || !positive_finite(value_max) || !(value_min < value_max))
            fail_input("extract config: need 0 < value_min < value_max");
    }
};

inline AxisScale axis_scale_from_string(const std::string& s) {
    if (s == "log" || s == "log10") return AxisScale::log10;
    if (s == "linear") return AxisScale::linear;
    fail_input("unknown axis scale '" + s + "' (expected log10 or linear)");
}

namespace detail {

inline std::vector<AxisAnchor> anchors_from_json(const nlohmann::json& j, const char* key) {
    std::vector<AxisAnchor> out;
    if (!j.contains(key)) return out;
    for (const auto& a : j.at(key)) {
        if (a.is_array() && a.size() == 2)
            out.push_back({a[0].get<double>(), a[1].get<double>()});
        else
            out.push_back({a.at("coordinate").get<double>(), a.at("value").get<double>()});
    }
    return out;
}

}  // namespace detail

/// Reads the "extract" section of a config (or a bare extract object).
inline ExtractConfig extract_config_from_json(const nlohmann::json& root) {
    const nlohmann::json& j = root.contains("extract") ? root.at("extract") : root;
    ExtractConfig c;
    try {
        c.points_selector = j.value("points_selector", c.points_selector);
        c.x_labels_selector = j.value("x_labels_selector", c.x_labels_selector);
        c.y_labels_selector = j.value("y_labels_selector", c.y_labels_selector);
        c.colorbar_selector = j.value("colorbar_selector", c.colorbar_selector);
        c.colorbar_kind = colorbar_kind_from_string(j.value("colorbar_kind", std::string("auto")));
        if (j.contains("orientation")) c.orientation = orientation_from_string(j.at("orientation").get<std::string>());
        c.value_min = j.value("value_min", c.value_min);
        c.value_max = j.value("value_max", c.value_max);
        c.x_scale = axis_scale_from_string(j.value("x_scale", std::string("log10")));
        c.y_scale = axis_scale_from_string(j.value("y_scale", std::string("log10")));
        c.x_anchors = detail::anchors_from_json(j, "x_anchors");
        c.y_anchors = detail::anchors_from_json(j, "y_anchors");
        if (j.contains("y_label_center_offset")) c.y_label_center_offset = j.at("y_label_center_offset").get<double>();
        if (j.contains("label_offsets"))
            c.label_offsets = j.at("label_offsets").get<std::map<std::string, double>>();
        c.decode.x_quantity = quantity_from_string(j.value("x_quantity", std::string("flop")));
        c.decode.y_quantity = quantity_from_string(j.value("y_quantity", std::string("n_params")));
        c.decode.flop_multiplier = j.value("flop_multiplier", c.decode.flop_multiplier);
    } catch (const nlohmann::json::exception& ex) {
        fail_input(std::string("extract config: ") + ex.what());
    }
    return c;
}

inline nlohmann::json extract_config_to_json(const ExtractConfig& c) {
    auto anchors = [](const std::vector<AxisAnchor>& v) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& x : v) a.push_back({x.coordinate, x.value});
        return a;
    };
    nlohmann::json j{
        {"points_selector", c.points_selector},
        {"x_labels_selector", c.x_labels_selector},
        {"y_labels_selector", c.y_labels_selector},
        {"colorbar_selector", c.colorbar_selector},
        {"value_min", c.value_min},
        {"value_max", c.value_max},
        {"x_scale", c.x_scale == AxisScale::log10 ? "log10" : "linear"},
        {"y_scale", c.y_scale == AxisScale::log10 ? "log10" : "linear"},
        {"x_quantity", to_string(c.decode.x_quantity)},
        {"y_quantity", to_string(c.decode.y_quantity)},
        {"flop_multiplier", c.decode.flop_multiplier},
        {"label_offsets", c.label_offsets},
    };
    if (c.orientation) j["orientation"] = to_string(*c.orientation);
    if (!c.x_anchors.empty()) j["x_anchors"] = anchors(c.x_anchors);
    if (!c.y_anchors.empty()) j["y_anchors"] = anchors(c.y_anchors);
    if (c.y_label_center_offset) j["y_label_center_offset"] = *c.y_label_center_offset;
    return j;
}

struct Extraction {
    DecodedFigure decoded;
    AxisCalibration x_axis;
    AxisCalibration y_axis;
    ColorScale scale;
    std::size_t raw_points = 0;
};

inline Extraction extract_figure(const SvgDocument& doc, const ExtractConfig& config) {
    config.validate();
    const auto raw = parse_svg_points(doc, config.points_selector);

    auto axis = [&](const std::vector<AxisAnchor>& fixed, const std::string& selector, AxisDirection dir,
                    AxisScale scale) {
        if (!fixed.empty()) return calibrate_axis_anchors(fixed, scale);
        LabelHarvestOptions opt;
        opt.direction = dir;
        if (dir == AxisDirection::vertical) opt.center_offset = config.y_label_center_offset;
        opt.per_label_offset = config.label_offsets;
        return calibrate_axis(harvest_labels(doc.select_one(selector), opt), scale);
    };
    Extraction ex;
    ex.raw_points = raw.size();
    ex.x_axis = axis(config.x_anchors, config.x_labels_selector, AxisDirection::horizontal, config.x_scale);
    ex.y_axis = axis(config.y_anchors, config.y_labels_selector, AxisDirection::vertical, config.y_scale);
    const auto bar = read_colorbar(doc.select_one(config.colorbar_selector), doc, config.colorbar_kind);
    ex.scale = decode_color_scale_positions(bar.colors, bar.positions, config.value_min, config.value_max,
                                            *config.orientation);
    ex.decoded = decode_points(raw, ex.x_axis, ex.y_axis, ex.scale, config.decode);
    return ex;
}

inline nlohmann::json diagnostics_to_json(const Extraction& ex) {
    const auto& d = ex.decoded.diagnostics;
    nlohmann::json pts = nlohmann::json::array();
    for (std::size_t i = 0; i < d.points.size(); ++i) {
        const auto& p = d.points[i];
        pts.push_back({{"source_id", ex.decoded.dataset.observations[i].source_id},
                       {"document_index", p.document_index},
                       {"fill", p.fill_hex},
                       {"matched", p.matched_hex},
                       {"color_distance", p.color_distance}});
    }
    nlohmann::json dups = nlohmann::json::array();
    for (const auto& [a, b] : d.duplicates) dups.push_back({a, b});
    return {{"raw_points", ex.raw_points},
            {"decoded_points", ex.decoded.dataset.size()},
            {"scale_entries", d.scale_entries},
            {"max_color_distance", d.max_color_distance},
            {"exact_color_matches", d.exact_color_matches},
            {"x_calibration", {{"slope", ex.x_axis.slope}, {"intercept", ex.x_axis.intercept},
                               {"max_residual", ex.x_axis.max_residual}, {"anchors", ex.x_axis.anchors.size()}}},
            {"y_calibration", {{"slope", ex.y_axis.slope}, {"intercept", ex.y_axis.intercept},
                               {"max_residual", ex.y_axis.max_residual}, {"anchors", ex.y_axis.anchors.size()}}},
            {"duplicates", dups},
            {"points", pts}};
}

}  // namespace scalefit::figure
