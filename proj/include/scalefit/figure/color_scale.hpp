#pragma once

// Logarithmic color scales decoded from a color bar.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <boost/archive/iterators/binary_from_base64.hpp>
#include <boost/archive/iterators/transform_width.hpp>
#include <fmt/format.h>
#include <png.h>

#include "scalefit/core.hpp"
#include "scalefit/figure/svg_document.hpp"

namespace scalefit::figure {

enum class ScaleOrientation { top_is_max, top_is_min };

inline ScaleOrientation orientation_from_string(const std::string& s) {
    if (s == "top_is_max" || s == "top-max") return ScaleOrientation::top_is_max;
    if (s == "top_is_min" || s == "top-min") return ScaleOrientation::top_is_min;
    fail_input("unknown color-scale orientation '" + s + "' (expected top_is_max or top_is_min)");
}

inline const char* to_string(ScaleOrientation o) {
    return o == ScaleOrientation::top_is_max ? "top_is_max" : "top_is_min";
}

struct ColorEntry {
    Rgb color;
    double value = 0.0;
};

struct ColorMatch {
    std::size_t index = 0;
    double value = 0.0;
    double distance = 0.0;  // RGB Euclidean distance to the matched entry
};

inline constexpr std::size_t max_scale_entries = 256;

struct ColorScale {
    std::vector<ColorEntry> entries;  // ordered top to bottom
    double value_min = 2.0;
    double value_max = 5.0;

    ColorMatch lookup(const Rgb& c) const {
        if (entries.empty()) fail_input("color scale is empty");
        ColorMatch best{0, entries[0].value, std::numeric_limits<double>::infinity()};
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const double d = c.distance(entries[i].color);
            if (d < best.distance) best = {i, entries[i].value, d};
        }
        return best;
    }

    /// Ratio between adjacent entry values, in log units, averaged over the scale.
    double log_step() const {
        if (entries.size() < 2) return 0.0;
        return std::log(value_max / value_min) / static_cast<double>(entries.size() - 1);
    }
};

/// Builds a scale from colors at relative positions t in [0, 1] measured from
/// the top. Values interpolate log-linearly between value_min and value_max.
/// Runs of one color take the midpoint of the run; a color that reappears
/// after a different color keeps its first position.
inline ColorScale decode_color_scale_positions(const std::vector<Rgb>& colors,
                                               const std::vector<double>& positions, double value_min,
                                               double value_max, ScaleOrientation orientation) {
    if (colors.size() != positions.size()) fail_input("decode_color_scale: colors/positions size mismatch");
    if (!positive_finite(value_min) || !positive_finite(value_max) || !(value_min < value_max))
        fail_input("decode_color_scale: need 0 < value_min < value_max");
    if (colors.size() < 2) fail_input("decode_color_scale: need at least two pixels");
    for (std::size_t i = 1; i < positions.size(); ++i)
        if (!(positions[i] >= positions[i - 1])) fail_input("decode_color_scale: positions must be ascending");

    struct Run {
        Rgb color;
        double t0, t1;
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < colors.size(); ++i) {
        if (!runs.empty() && runs.back().color == colors[i])
            runs.back().t1 = positions[i];
        else
            runs.push_back({colors[i], positions[i], positions[i]});
    }
    if (runs.size() < 2) fail_input("decode_color_scale: all pixels have the same color");

    ColorScale scale;
    scale.value_min = value_min;
    scale.value_max = value_max;
    const double lo = std::log(value_min), hi = std::log(value_max);
    std::set<Rgb> seen;
    for (const auto& r : runs) {
        if (!seen.insert(r.color).second) continue;
        const double t = std::clamp(0.5 * (r.t0 + r.t1), 0.0, 1.0);
        const double lv = orientation == ScaleOrientation::top_is_max ? hi - t * (hi - lo) : lo + t * (hi - lo);
        scale.entries.push_back({r.color, std::exp(lv)});
    }
    if (scale.entries.size() > max_scale_entries)
        fail_input(fmt::format("decode_color_scale: {} distinct colors exceeds the limit of {}",
                               scale.entries.size(), max_scale_entries));
    return scale;
}

/// Pixels sampled top to bottom at equal spacing; pixel i sits at i / (n - 1).
inline ColorScale decode_color_scale(const std::vector<Rgb>& pixels, double value_min, double value_max,
                                     ScaleOrientation orientation) {
    std::vector<double> positions(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i)
        positions[i] = pixels.size() > 1 ? static_cast<double>(i) / static_cast<double>(pixels.size() - 1) : 0.0;
    return decode_color_scale_positions(pixels, positions, value_min, value_max, orientation);
}

struct RgbImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel

    Rgb at(std::uint32_t x, std::uint32_t y) const {
        const std::size_t k = 3 * (static_cast<std::size_t>(y) * width + x);
        return {rgb[k], rgb[k + 1], rgb[k + 2]};
    }
};

inline std::vector<std::uint8_t> decode_base64(std::string_view text) {
    std::string clean;
    for (char c : text)
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '+' || c == '/') clean += c;
    const std::size_t pad = (4 - clean.size() % 4) % 4;
    if (pad == 3) fail_input("malformed base64 payload");
    clean.append(pad, 'A');
    using namespace boost::archive::iterators;
    using It = transform_width<binary_from_base64<std::string::const_iterator>, 8, 6>;
    std::vector<std::uint8_t> out;
    try {
        for (It it(clean.cbegin()), end(clean.cend()); it != end; ++it)
            out.push_back(static_cast<std::uint8_t>(*it));
    } catch (const std::exception&) {
        fail_input("malformed base64 payload");
    }
    out.resize(out.size() - pad);
    return out;
}

inline RgbImage decode_png(const std::vector<std::uint8_t>& bytes) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
        fail_input(std::string("PNG decode failed: ") + img.message);
    img.format = PNG_FORMAT_RGB;
    RgbImage out;
    out.width = img.width;
    out.height = img.height;
    out.rgb.resize(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
        png_image_free(&img);
        fail_input(std::string("PNG decode failed: ") + img.message);
    }
    return out;
}

inline std::vector<std::uint8_t> encode_png(const RgbImage& image) {
    png_image img{};
    img.version = PNG_IMAGE_VERSION;
    img.width = image.width;
    img.height = image.height;
    img.format = PNG_FORMAT_RGB;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr))
        fail_input(std::string("PNG encode failed: ") + img.message);
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr))
        fail_input(std::string("PNG encode failed: ") + img.message);
    out.resize(size);
    return out;
}

inline std::string encode_base64(const std::vector<std::uint8_t>& bytes) {
    static constexpr char alphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    for (std::size_t i = 0; i < bytes.size(); i += 3) {
        const std::uint32_t b0 = bytes[i];
        const std::uint32_t b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
        const std::uint32_t b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
        const std::uint32_t v = (b0 << 16) | (b1 << 8) | b2;
        out += alphabet[(v >> 18) & 63];
        out += alphabet[(v >> 12) & 63];
        out += i + 1 < bytes.size() ? alphabet[(v >> 6) & 63] : '=';
        out += i + 2 < bytes.size() ? alphabet[v & 63] : '=';
    }
    return out;
}

enum class ColorbarKind { automatic, rects, gradient, image };

inline ColorbarKind colorbar_kind_from_string(const std::string& s) {
    if (s == "auto") return ColorbarKind::automatic;
    if (s == "rects") return ColorbarKind::rects;
    if (s == "gradient") return ColorbarKind::gradient;
    if (s == "image") return ColorbarKind::image;
    fail_input("unknown colorbar kind '" + s + "' (expected auto, rects, gradient or image)");
}

struct ColorbarSamples {
    std::vector<Rgb> colors;
    std::vector<double> positions;  // 0 = top, 1 = bottom
    ColorbarKind kind = ColorbarKind::rects;
};

namespace detail {

inline ColorbarSamples colorbar_from_rects(const Element& group, const SvgDocument& doc) {
    struct Cell {
        double y;
        Rgb c;
    };
    std::vector<Cell> cells;
    SvgDocument::walk(group, [&](const Element& e) {
        if (e.tag != "rect") return;
        const auto fill = resolve_fill(e);
        if (!fill) return;
        const auto c = local_center(e, doc);
        const auto p = e.ctm().apply((*c)[0], (*c)[1]);
        cells.push_back({p[1], *fill});
    });
    if (cells.size() < 2) fail_input("colorbar: fewer than two filled rects");
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) { return a.y < b.y; });
    ColorbarSamples out;
    out.kind = ColorbarKind::rects;
    const double y0 = cells.front().y, y1 = cells.back().y;
    for (const auto& c : cells) {
        out.colors.push_back(c.c);
        out.positions.push_back(y1 > y0 ? (c.y - y0) / (y1 - y0) : 0.0);
    }
    return out;
}

inline const Element* find_descendant(const Element& root, const std::string& tag) {
    const Element* hit = nullptr;
    SvgDocument::walk(root, [&](const Element& e) {
        if (!hit && e.tag == tag) hit = &e;
    });
    return hit;
}

/// Vertical gradient: stop offsets run from y1 to y2; offset 0 is the top
/// when y1 < y2 (the usual orientation).
inline ColorbarSamples colorbar_from_gradient(const Element& group, const SvgDocument& doc) {
    const Element* grad = group.tag == "linearGradient" ? &group : find_descendant(group, "linearGradient");
    if (!grad) {
        // The bar may reference a gradient defined elsewhere via fill="url(#id)".
        SvgDocument::walk(group, [&](const Element& e) {
            if (grad) return;
            if (auto f = e.property("fill"); f && f->rfind("url(#", 0) == 0) {
                const auto id = f->substr(5, f->find(')') - 5);
                grad = doc.by_id(id);
            }
        });
    }
    if (!grad) fail_input("colorbar: no linearGradient found");
    const bool flipped = grad->number("y1", 0.0) > grad->number("y2", 1.0);
    ColorbarSamples out;
    out.kind = ColorbarKind::gradient;
    std::vector<std::pair<double, Rgb>> stops;
    for (const auto& s : grad->children) {
        if (s.tag != "stop") continue;
        auto col = s.property("stop-color");
        if (!col) fail_input("colorbar: gradient stop without stop-color");
        auto c = parse_color(*col);
        if (!c) fail_input("colorbar: unparseable stop-color '" + *col + "'");
        double off = 0.0;
        if (const auto* o = s.attr("offset")) {
            std::string v = *o;
            const bool pct = !v.empty() && v.back() == '%';
            if (pct) v.pop_back();
            auto num = to_number(v);
            if (!num) fail_input("colorbar: bad stop offset '" + *o + "'");
            off = pct ? *num / 100.0 : *num;
        }
        stops.push_back({flipped ? 1.0 - off : off, *c});
    }
    std::stable_sort(stops.begin(), stops.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [t, c] : stops) {
        out.positions.push_back(t);
        out.colors.push_back(c);
    }
    return out;
}

/// Embedded PNG: reads the center column top to bottom, one sample per pixel row.
inline ColorbarSamples colorbar_from_image(const Element& group) {
    const Element* img = group.tag == "image" ? &group : find_descendant(group, "image");
    if (!img) fail_input("colorbar: no <image> element found");
    const std::string* href = img->attr("xlink:href");
    if (!href) href = img->attr("href");
    if (!href) fail_input("colorbar: <image> has no href");
    const std::string prefix = "data:image/png;base64,";
    if (href->rfind(prefix, 0) != 0) fail_input("colorbar: only inline base64 PNG images are supported");
    const auto image = decode_png(decode_base64(std::string_view(*href).substr(prefix.size())));
    if (image.height < 2) fail_input("colorbar: image is less than two pixels tall");
    // A negative vertical scale in the image's transform means it is drawn upside down.
    const bool flipped = img->ctm().d < 0.0;
    ColorbarSamples out;
    out.kind = ColorbarKind::image;
    const std::uint32_t x = image.width / 2;
    for (std::uint32_t r = 0; r < image.height; ++r) {
        const std::uint32_t y = flipped ? image.height - 1 - r : r;
        out.colors.push_back(image.at(x, y));
        out.positions.push_back(static_cast<double>(r) / static_cast<double>(image.height - 1));
    }
    return out;
}

}  // namespace detail

inline ColorbarSamples read_colorbar(const Element& group, const SvgDocument& doc,
                                     ColorbarKind kind = ColorbarKind::automatic) {
    if (kind == ColorbarKind::automatic) {
        if (group.tag == "image" || detail::find_descendant(group, "image")) kind = ColorbarKind::image;
        else if (group.tag == "linearGradient" || detail::find_descendant(group, "linearGradient"))
            kind = ColorbarKind::gradient;
        else {
            std::size_t rects = 0;
            SvgDocument::walk(group, [&](const Element& e) { rects += e.tag == "rect"; });
            kind = rects >= 2 ? ColorbarKind::rects : ColorbarKind::gradient;
        }
    }
    switch (kind) {
        case ColorbarKind::rects: return detail::colorbar_from_rects(group, doc);
        case ColorbarKind::gradient: return detail::colorbar_from_gradient(group, doc);
        case ColorbarKind::image: return detail::colorbar_from_image(group);
        case ColorbarKind::automatic: break;
    }
    fail_input("colorbar: unresolved kind");
}

}  // namespace scalefit::figure
