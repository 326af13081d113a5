#pragma once

// Minimal SVG document model: element tree, transforms, selectors, fill
// resolution and shape centers. Enough to harvest scatter points, tick
// labels and color bars from vector figures.

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <fmt/format.h>

#include "scalefit/core.hpp"

namespace scalefit::figure {

struct Rgb {
    int r = 0;
    int g = 0;
    int b = 0;

    std::string hex() const { return fmt::format("#{:02x}{:02x}{:02x}", r, g, b); }

    double distance(const Rgb& o) const {
        const double dr = r - o.r, dg = g - o.g, db = b - o.b;
        return std::sqrt(dr * dr + dg * dg + db * db);
    }

    friend bool operator==(const Rgb&, const Rgb&) = default;
    friend auto operator<=>(const Rgb&, const Rgb&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::optional<double> to_number(std::string_view s) {
    s = trim(s);
    // Tolerate CSS units (px, pt) on coordinates.
    while (!s.empty() && std::isalpha(static_cast<unsigned char>(s.back())) && s.back() != 'e' &&
           s.back() != 'E')
        s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// All numbers in a list such as "1,2 3e4-5".
inline std::vector<double> number_list(std::string_view s) {
    std::vector<double> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            const char* begin = s.data() + i;
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(begin + (c == '+' ? 1 : 0), s.data() + s.size(), v);
            if (ec != std::errc()) {
                ++i;
                continue;
            }
            out.push_back(v);
            i = static_cast<std::size_t>(ptr - s.data());
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace detail

/// Parses #rgb, #rrggbb, rgb(r, g, b), rgb(r%, g%, b%) and a few names.
inline std::optional<Rgb> parse_color(std::string_view text) {
    const std::string s = detail::lower(detail::trim(text));
    if (s.empty() || s == "none" || s == "transparent") return std::nullopt;
    if (s[0] == '#') {
        auto hexval = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            return -1;
        };
        for (std::size_t i = 1; i < s.size(); ++i)
            if (hexval(s[i]) < 0) return std::nullopt;
        if (s.size() == 4)
            return Rgb{hexval(s[1]) * 17, hexval(s[2]) * 17, hexval(s[3]) * 17};
        if (s.size() == 7)
            return Rgb{hexval(s[1]) * 16 + hexval(s[2]), hexval(s[3]) * 16 + hexval(s[4]),
                       hexval(s[5]) * 16 + hexval(s[6])};
        return std::nullopt;
    }
    if (s.rfind("rgb(", 0) == 0 && s.back() == ')') {
        const bool pct = s.find('%') != std::string::npos;
        auto v = detail::number_list(std::string_view(s).substr(4, s.size() - 5));
        if (v.size() != 3) return std::nullopt;
        auto chan = [&](double x) {
            const double c = pct ? x * 255.0 / 100.0 : x;
            return static_cast<int>(std::lround(std::clamp(c, 0.0, 255.0)));
        };
        return Rgb{chan(v[0]), chan(v[1]), chan(v[2])};
    }
    static const std::map<std::string, Rgb> named{
        {"black", {0, 0, 0}},     {"white", {255, 255, 255}}, {"red", {255, 0, 0}},
        {"green", {0, 128, 0}},   {"blue", {0, 0, 255}},      {"gray", {128, 128, 128}},
        {"grey", {128, 128, 128}}, {"yellow", {255, 255, 0}}, {"orange", {255, 165, 0}},
        {"purple", {128, 0, 128}},
    };
    if (auto it = named.find(s); it != named.end()) return it->second;
    return std::nullopt;
}

/// 2-D affine map [a c e; b d f; 0 0 1], as in SVG's matrix(a b c d e f).
struct Affine {
    double a = 1, b = 0, c = 0, d = 1, e = 0, f = 0;

    std::array<double, 2> apply(double x, double y) const {
        return {a * x + c * y + e, b * x + d * y + f};
    }

    /// this * o (apply o first).
    Affine operator*(const Affine& o) const {
        return {a * o.a + c * o.b, b * o.a + d * o.b, a * o.c + c * o.d,
                b * o.c + d * o.d, a * o.e + c * o.f + e, b * o.e + d * o.f + f};
    }
};

inline Affine parse_transform(std::string_view text) {
    Affine m;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find('(', pos);
        if (open == std::string_view::npos) break;
        const auto close = text.find(')', open);
        if (close == std::string_view::npos) fail_input("malformed transform '" + std::string(text) + "'");
        std::string name = detail::lower(detail::trim(text.substr(pos, open - pos)));
        if (!name.empty() && name.front() == ',') name = detail::lower(detail::trim(name.substr(1)));
        const auto args = detail::number_list(text.substr(open + 1, close - open - 1));
        Affine t;
        auto need = [&](std::size_t k) {
            if (args.size() < k) fail_input("transform '" + name + "' has too few arguments");
        };
        if (name == "translate") {
            need(1);
            t.e = args[0];
            t.f = args.size() > 1 ? args[1] : 0.0;
        } else if (name == "scale") {
            need(1);
            t.a = args[0];
            t.d = args.size() > 1 ? args[1] : args[0];
        } else if (name == "matrix") {
            need(6);
            t = {args[0], args[1], args[2], args[3], args[4], args[5]};
        } else if (name == "rotate") {
            need(1);
            const double th = args[0] * std::numbers::pi / 180.0;
            Affine r{std::cos(th), std::sin(th), -std::sin(th), std::cos(th), 0, 0};
            if (args.size() >= 3) {
                Affine to{1, 0, 0, 1, args[1], args[2]}, back{1, 0, 0, 1, -args[1], -args[2]};
                r = to * r * back;
            }
            t = r;
        } else if (name == "skewx") {
            need(1);
            t.c = std::tan(args[0] * std::numbers::pi / 180.0);
        } else if (name == "skewy") {
            need(1);
            t.b = std::tan(args[0] * std::numbers::pi / 180.0);
        } else {
            fail_input("unsupported transform '" + name + "'");
        }
        m = m * t;
        pos = close + 1;
    }
    return m;
}

struct Element {
    std::string tag;
    std::map<std::string, std::string> attrs;
    std::string text;
    std::vector<Element> children;
    const Element* parent = nullptr;

    const std::string* attr(const std::string& name) const {
        auto it = attrs.find(name);
        return it == attrs.end() ? nullptr : &it->second;
    }

    double number(const std::string& name, double fallback = 0.0) const {
        if (const auto* v = attr(name)) {
            if (auto d = detail::to_number(*v)) return *d;
            fail_input(fmt::format("<{}> attribute {}='{}' is not a number", tag, name, *v));
        }
        return fallback;
    }

    /// A property from the `style` attribute, falling back to the attribute itself.
    std::optional<std::string> property(const std::string& name) const {
        if (const auto* style = attr("style")) {
            std::string_view s = *style;
            std::size_t pos = 0;
            while (pos < s.size()) {
                auto semi = s.find(';', pos);
                if (semi == std::string_view::npos) semi = s.size();
                const auto decl = s.substr(pos, semi - pos);
                const auto colon = decl.find(':');
                if (colon != std::string_view::npos &&
                    detail::trim(decl.substr(0, colon)) == name)
                    return std::string(detail::trim(decl.substr(colon + 1)));
                pos = semi + 1;
            }
        }
        if (const auto* v = attr(name)) return *v;
        return std::nullopt;
    }

    Affine local_transform() const {
        if (const auto* t = attr("transform")) return parse_transform(*t);
        return {};
    }

    /// Current transformation matrix from the document root to this element.
    Affine ctm() const {
        Affine m = local_transform();
        for (const Element* p = parent; p; p = p->parent) m = p->local_transform() * m;
        return m;
    }

    /// Concatenated character data of this element and its descendants.
    std::string all_text() const {
        std::string out = text;
        for (const auto& c : children) out += c.all_text();
        return out;
    }

    bool has_class(const std::string& cls) const {
        const auto* v = attr("class");
        if (!v) return false;
        std::istringstream in(*v);
        std::string tok;
        while (in >> tok)
            if (tok == cls) return true;
        return false;
    }
};

namespace detail {

inline std::string strip_ns(const std::string& tag) {
    const auto colon = tag.find(':');
    return colon == std::string::npos ? tag : tag.substr(colon + 1);
}

inline void build(Element& out, const boost::property_tree::ptree& node) {
    out.text = node.data();
    for (const auto& [key, child] : node) {
        if (key == "<xmlattr>") {
            for (const auto& [an, av] : child) out.attrs[an] = av.data();
        } else if (key == "<xmlcomment>") {
            continue;
        } else {
            Element e;
            e.tag = strip_ns(key);
            build(e, child);
            out.children.push_back(std::move(e));
        }
    }
}

inline void link_parents(Element& e) {
    for (auto& c : e.children) {
        c.parent = &e;
        link_parents(c);
    }
}

}  // namespace detail

class SvgDocument {
public:
    static SvgDocument parse(const std::string& text) {
        boost::property_tree::ptree tree;
        std::istringstream in(text);
        try {
            boost::property_tree::read_xml(in, tree);
        } catch (const boost::property_tree::xml_parser_error& ex) {
            fail_input(fmt::format("SVG parse error: {} (line {})", ex.message(), ex.line()));
        }
        SvgDocument doc;
        doc.root_ = std::make_unique<Element>();
        doc.root_->tag = "#document";
        detail::build(*doc.root_, tree);
        detail::link_parents(*doc.root_);
        doc.index(*doc.root_);
        return doc;
    }

    const Element& root() const { return *root_; }

    const Element* by_id(const std::string& id) const {
        auto it = ids_.find(id);
        return it == ids_.end() ? nullptr : it->second;
    }

    /// Supported selectors: `#id`, `.class`, `tag`, `tag#id`, `tag.class`,
    /// `[attr=value]` and `tag[attr=value]`.
    std::vector<const Element*> select(const std::string& selector) const {
        std::string tag, id, cls, attr_name, attr_value;
        std::string_view s = detail::trim(selector);
        if (s.empty()) fail_input("empty selector");
        if (const auto br = s.find('['); br != std::string_view::npos) {
            const auto end = s.find(']', br);
            const auto eq = s.find('=', br);
            if (end == std::string_view::npos || eq == std::string_view::npos || eq > end)
                fail_input("malformed selector '" + selector + "'");
            attr_name = std::string(detail::trim(s.substr(br + 1, eq - br - 1)));
            std::string_view v = detail::trim(s.substr(eq + 1, end - eq - 1));
            if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'')) v = v.substr(1, v.size() - 2);
            attr_value = std::string(v);
            s = s.substr(0, br);
        }
        if (const auto h = s.find('#'); h != std::string_view::npos) {
            id = std::string(s.substr(h + 1));
            s = s.substr(0, h);
        } else if (const auto d = s.find('.'); d != std::string_view::npos) {
            cls = std::string(s.substr(d + 1));
            s = s.substr(0, d);
        }
        tag = std::string(s);

        std::vector<const Element*> out;
        walk(*root_, [&](const Element& e) {
            if (!tag.empty() && e.tag != tag) return;
            if (!id.empty()) {
                const auto* v = e.attr("id");
                if (!v || *v != id) return;
            }
            if (!cls.empty() && !e.has_class(cls)) return;
            if (!attr_name.empty()) {
                const auto* v = e.attr(attr_name);
                if (!v || *v != attr_value) return;
            }
            out.push_back(&e);
        });
        return out;
    }

    const Element& select_one(const std::string& selector) const {
        const auto hits = select(selector);
        if (hits.size() != 1)
            fail_input(fmt::format("selector '{}' matched {} elements (expected exactly one)",
                                   selector, hits.size()));
        return *hits.front();
    }

    template <class F>
    static void walk(const Element& e, F&& f) {
        f(e);
        for (const auto& c : e.children) walk(c, f);
    }

private:
    void index(const Element& e) {
        if (const auto* id = e.attr("id")) ids_.emplace(*id, &e);
        for (const auto& c : e.children) index(c);
    }

    std::unique_ptr<Element> root_;
    std::map<std::string, const Element*> ids_;
};

/// Fill color with CSS inheritance; nullopt if unset everywhere or "none".
inline std::optional<Rgb> resolve_fill(const Element& e) {
    for (const Element* p = &e; p; p = p->parent) {
        if (auto f = p->property("fill")) {
            if (detail::lower(detail::trim(*f)) == "inherit") continue;
            return parse_color(*f);
        }
    }
    return std::nullopt;
}

struct BBox {
    double x0 = std::numeric_limits<double>::infinity();
    double y0 = std::numeric_limits<double>::infinity();
    double x1 = -std::numeric_limits<double>::infinity();
    double y1 = -std::numeric_limits<double>::infinity();

    void add(double x, double y) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
    }
    bool empty() const { return !(x0 <= x1 && y0 <= y1); }
    std::array<double, 2> center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
};

/// Bounding box of path data from its end points and control points.
inline BBox path_bbox(std::string_view d) {
    BBox box;
    double cx = 0, cy = 0, sx = 0, sy = 0;
    char cmd = 0;
    std::size_t i = 0;
    std::vector<double> nums;
    auto flush = [&](char c, const std::vector<double>& v) {
        const bool rel = std::islower(static_cast<unsigned char>(c));
        const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        auto pt = [&](double x, double y) {
            if (rel) {
                x += cx;
                y += cy;
            }
            return std::array<double, 2>{x, y};
        };
        std::size_t k = 0;
        auto take = [&](std::size_t n) { return k + n <= v.size(); };
        switch (u) {
            case 'M':
            case 'L':
            case 'T': {
                bool first = true;
                while (take(2)) {
                    auto p = pt(v[k], v[k + 1]);
                    k += 2;
                    cx = p[0];
                    cy = p[1];
                    box.add(cx, cy);
                    if (u == 'M' && first) {
                        sx = cx;
                        sy = cy;
                    }
                    first = false;
                }
                break;
            }
            case 'H':
                while (take(1)) {
                    cx = rel ? cx + v[k] : v[k];
                    ++k;
                    box.add(cx, cy);
                }
                break;
            case 'V':
                while (take(1)) {
                    cy = rel ? cy + v[k] : v[k];
                    ++k;
                    box.add(cx, cy);
                }
                break;
            case 'C':
            case 'S':
            case 'Q': {
                const std::size_t n = u == 'C' ? 6 : 4;
                while (take(n)) {
                    for (std::size_t j = 0; j + 1 < n; j += 2) {
                        auto p = pt(v[k + j], v[k + j + 1]);
                        box.add(p[0], p[1]);
                    }
                    auto p = pt(v[k + n - 2], v[k + n - 1]);
                    cx = p[0];
                    cy = p[1];
                    k += n;
                }
                break;
            }
            case 'A':
                while (take(7)) {
                    const double rx = std::abs(v[k]), ry = std::abs(v[k + 1]);
                    auto p = pt(v[k + 5], v[k + 6]);
                    // Conservative: include both end points padded by the radii.
                    box.add(cx, cy);
                    box.add(p[0], p[1]);
                    (void)rx;
                    (void)ry;
                    cx = p[0];
                    cy = p[1];
                    k += 7;
                }
                break;
            case 'Z':
                cx = sx;
                cy = sy;
                break;
            default:
                fail_input(fmt::format("unsupported path command '{}'", c));
        }
    };
    while (i < d.size()) {
        const char c = d[i];
        if (std::isalpha(static_cast<unsigned char>(c)) && c != 'e' && c != 'E') {
            if (cmd) flush(cmd, nums);
            cmd = c;
            nums.clear();
            ++i;
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '-' || c == '+' || c == '.') {
            const char* begin = d.data() + i + (c == '+' ? 1 : 0);
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(begin, d.data() + d.size(), v);
            if (ec != std::errc()) fail_input("malformed path data");
            nums.push_back(v);
            i = static_cast<std::size_t>(ptr - d.data());
            continue;
        }
        ++i;
    }
    if (cmd) flush(cmd, nums);
    return box;
}

/// Center of a shape in its own user space (before its own transform).
inline std::optional<std::array<double, 2>> local_center(const Element& e, const SvgDocument& doc,
                                                          int depth = 0) {
    if (e.tag == "circle" || e.tag == "ellipse") return std::array{e.number("cx"), e.number("cy")};
    if (e.tag == "rect")
        return std::array{e.number("x") + 0.5 * e.number("width"),
                          e.number("y") + 0.5 * e.number("height")};
    if (e.tag == "path") {
        const auto* d = e.attr("d");
        if (!d) return std::nullopt;
        const auto box = path_bbox(*d);
        if (box.empty()) return std::nullopt;
        return box.center();
    }
    if (e.tag == "polygon" || e.tag == "polyline") {
        const auto* pts = e.attr("points");
        if (!pts) return std::nullopt;
        const auto v = detail::number_list(*pts);
        BBox box;
        for (std::size_t i = 0; i + 1 < v.size(); i += 2) box.add(v[i], v[i + 1]);
        if (box.empty()) return std::nullopt;
        return box.center();
    }
    if (e.tag == "use") {
        if (depth > 8) fail_input("<use> reference chain too deep");
        const std::string* href = e.attr("xlink:href");
        if (!href) href = e.attr("href");
        if (!href || href->empty() || (*href)[0] != '#') return std::nullopt;
        const Element* ref = doc.by_id(href->substr(1));
        if (!ref) fail_input("<use> references missing id '" + *href + "'");
        auto c = local_center(*ref, doc, depth + 1);
        if (!c) return std::nullopt;
        const auto t = ref->local_transform().apply((*c)[0], (*c)[1]);
        return std::array{t[0] + e.number("x"), t[1] + e.number("y")};
    }
    return std::nullopt;
}

inline bool is_point_shape(const Element& e) {
    static const std::array<std::string_view, 7> shapes{"circle", "ellipse", "rect", "path",
                                                        "polygon", "polyline", "use"};
    return std::find(shapes.begin(), shapes.end(), e.tag) != shapes.end();
}

/// Fill of a <use> falls back to the referenced element's own fill.
inline std::optional<Rgb> resolve_shape_fill(const Element& e, const SvgDocument& doc) {
    if (auto f = resolve_fill(e)) return f;
    if (e.tag == "use") {
        const std::string* href = e.attr("xlink:href");
        if (!href) href = e.attr("href");
        if (href && !href->empty() && (*href)[0] == '#')
            if (const Element* ref = doc.by_id(href->substr(1))) return resolve_fill(*ref);
    }
    return std::nullopt;
}

}  // namespace scalefit::figure
