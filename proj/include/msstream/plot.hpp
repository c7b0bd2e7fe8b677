#pragma once

#include <algorithm>
#include <cstdio>
#include <string>
#include <vector>

#include "msstream/classify.hpp"
#include "msstream/error.hpp"

namespace msstream::plot {

struct SvgOptions {
    int width = 640;
    int height = 480;
    int margin = 48;
    double radius = 4.0;
};

inline constexpr const char* kCentralColor = "#1b9e9e";   // teal
inline constexpr const char* kOutlyingColor = "#e7298a";  // pink

namespace detail {

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", v);
    return buf;
}

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

struct Range {
    double lo, hi;
};

inline Range padded(double lo, double hi) {
    if (hi - lo <= 0.0) return {lo - 1.0, hi + 1.0};
    const double pad = 0.05 * (hi - lo);
    return {lo - pad, hi + pad};
}

}  // namespace detail

/// Static MS-plot scatter: MO on x, VO on y, one circle per series in input order.
/// Same points give the same bytes.
inline std::string render_msplot_svg(const std::vector<MsPoint>& points, const SvgOptions& o = {}) {
    if (points.empty()) throw DataError("nothing to plot: no MS points");
    if (o.width <= 2 * o.margin || o.height <= 2 * o.margin) throw ConfigError("plot size too small for margins");
    auto [mo_min, mo_max] = std::minmax_element(points.begin(), points.end(), [](auto& a, auto& b) { return a.mo < b.mo; });
    auto [vo_min, vo_max] = std::minmax_element(points.begin(), points.end(), [](auto& a, auto& b) { return a.vo < b.vo; });
    const auto xr = detail::padded(mo_min->mo, mo_max->mo);
    const auto yr = detail::padded(std::min(0.0, vo_min->vo), vo_max->vo);
    const double pw = o.width - 2.0 * o.margin, ph = o.height - 2.0 * o.margin;
    auto sx = [&](double v) { return o.margin + (v - xr.lo) / (xr.hi - xr.lo) * pw; };
    auto sy = [&](double v) { return o.height - o.margin - (v - yr.lo) / (yr.hi - yr.lo) * ph; };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(o.width) + "\" height=\"" +
         std::to_string(o.height) + "\" viewBox=\"0 0 " + std::to_string(o.width) + " " + std::to_string(o.height) +
         "\">\n";
    s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    const auto x0 = detail::fmt(o.margin), x1 = detail::fmt(o.width - o.margin);
    const auto y0 = detail::fmt(o.height - o.margin), y1 = detail::fmt(o.margin);
    s += "<g stroke=\"#444\" stroke-width=\"1\">\n";
    s += "<line x1=\"" + x0 + "\" y1=\"" + y0 + "\" x2=\"" + x1 + "\" y2=\"" + y0 + "\"/>\n";
    s += "<line x1=\"" + x0 + "\" y1=\"" + y0 + "\" x2=\"" + x0 + "\" y2=\"" + y1 + "\"/>\n";
    s += "</g>\n";
    s += "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#444\">\n";
    s += "<text x=\"" + detail::fmt(o.width / 2.0) + "\" y=\"" + detail::fmt(o.height - o.margin / 4.0) +
         "\" text-anchor=\"middle\">MO</text>\n";
    s += "<text x=\"" + detail::fmt(o.margin / 3.0) + "\" y=\"" + detail::fmt(o.height / 2.0) +
         "\" text-anchor=\"middle\">VO</text>\n";
    s += "<text x=\"" + x0 + "\" y=\"" + detail::fmt(o.height - o.margin + 14.0) + "\">" + detail::fmt(xr.lo) + "</text>\n";
    s += "<text x=\"" + x1 + "\" y=\"" + detail::fmt(o.height - o.margin + 14.0) + "\" text-anchor=\"end\">" +
         detail::fmt(xr.hi) + "</text>\n";
    s += "<text x=\"" + detail::fmt(o.margin - 4.0) + "\" y=\"" + y0 + "\" text-anchor=\"end\">" + detail::fmt(yr.lo) +
         "</text>\n";
    s += "<text x=\"" + detail::fmt(o.margin - 4.0) + "\" y=\"" + y1 + "\" text-anchor=\"end\">" + detail::fmt(yr.hi) +
         "</text>\n";
    s += "</g>\n";
    s += "<g stroke=\"none\">\n";
    for (const auto& p : points) {
        s += "<circle cx=\"" + detail::fmt(sx(p.mo)) + "\" cy=\"" + detail::fmt(sy(p.vo)) + "\" r=\"" +
             detail::fmt(o.radius) + "\" fill=\"" + (p.label == Label::central ? kCentralColor : kOutlyingColor) +
             "\" class=\"" + to_string(p.label) + "\"><title>" + detail::escape(p.series_id) + "</title></circle>\n";
    }
    s += "</g>\n</svg>\n";
    return s;
}

}  // namespace msstream::plot
