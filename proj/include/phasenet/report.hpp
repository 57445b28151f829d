#pragma once

// Minimal SVG rendering for training curves and score histograms.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phasenet/error.hpp"

namespace phasenet::svg {

struct Series {
    std::string name;
    std::vector<double> x, y;
    std::string color;
};

namespace detail {

constexpr double kWidth = 720, kHeight = 420, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
inline const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

inline std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct Frame {
    double x0, x1, y0, y1;
    double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
    double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

inline void widen(double& lo, double& hi) {
    if (!(hi > lo)) {
        const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.5;
        lo -= pad;
        hi += pad;
    }
}

inline void axes(std::ostringstream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel) {
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << escape(title)
       << "</text>\n";
    const double bx = kLeft, by = kHeight - kBottom, ex = kWidth - kRight, ey = kTop;
    os << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << ex << "\" y2=\"" << by << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << bx << "\" y2=\"" << ey << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0, yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
        os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << by + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << num(xv) << "</text>\n";
        os << "<text x=\"" << bx - 6 << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\" font-size=\"11\">"
           << num(yv) << "</text>\n";
    }
    os << "<text x=\"" << (bx + ex) / 2 << "\" y=\"" << kHeight - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
       << escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (by + ey) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
       << (by + ey) / 2 << ")\">" << escape(ylabel) << "</text>\n";
}

inline void legend(std::ostringstream& os, const std::vector<std::pair<std::string, std::string>>& items) {
    double y = kTop + 10;
    for (const auto& [name, color] : items) {
        os << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << y - 9 << "\" width=\"12\" height=\"12\" fill=\""
           << color << "\"/>\n";
        os << "<text x=\"" << kWidth - kRight - 132 << "\" y=\"" << y + 1 << "\" font-size=\"12\">" << escape(name)
           << "</text>\n";
        y += 18;
    }
}

inline std::string open() {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
    return os.str();
}

}  // namespace detail

inline std::string line_plot(std::vector<Series> series, const std::string& title, const std::string& xlabel,
                             const std::string& ylabel, bool log_y = false) {
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    const auto ty = [log_y](double v) { return log_y ? std::log10(std::max(v, 1e-12)) : v; };
    for (std::size_t i = 0; i < series.size(); ++i) {
        auto& s = series[i];
        if (s.x.size() != s.y.size()) throw DataError("line_plot: series '" + s.name + "' has mismatched x/y");
        if (s.color.empty()) s.color = detail::kPalette[i % std::size(detail::kPalette)];
        for (std::size_t k = 0; k < s.x.size(); ++k) {
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    detail::widen(x0, x1);
    detail::widen(y0, y1);
    const detail::Frame f{x0, x1, y0, y1};
    std::ostringstream os;
    os << detail::open();
    detail::axes(os, f, title, xlabel, log_y ? "log10 " + ylabel : ylabel);
    std::vector<std::pair<std::string, std::string>> items;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"2\" points=\"";
        for (std::size_t k = 0; k < s.x.size(); ++k)
            os << (k ? " " : "") << detail::num(f.px(s.x[k])) << ',' << detail::num(f.py(ty(s.y[k])));
        os << "\"/>\n";
        items.emplace_back(s.name, s.color);
    }
    detail::legend(os, items);
    os << "</svg>\n";
    return os.str();
}

struct HistogramGroup {
    std::string name;
    std::vector<double> values;
    std::string color;
};

// Overlaid histograms on shared bins, with an optional vertical marker (the threshold).
inline std::string histogram(std::vector<HistogramGroup> groups, std::size_t bins, const std::string& title,
                             const std::string& xlabel, std::optional<double> marker = std::nullopt) {
    if (bins == 0) throw ConfigError("histogram: bins must be >= 1");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : groups)
        for (double v : g.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (marker) lo = std::min(lo, *marker), hi = std::max(hi, *marker);
    if (!std::isfinite(lo)) lo = 0, hi = 1;
    detail::widen(lo, hi);
    const double width = (hi - lo) / static_cast<double>(bins);
    std::vector<std::vector<std::size_t>> counts(groups.size(), std::vector<std::size_t>(bins, 0));
    std::size_t top = 1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].color.empty()) groups[g].color = detail::kPalette[g % std::size(detail::kPalette)];
        for (double v : groups[g].values) {
            const auto b = std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
            top = std::max(top, ++counts[g][b]);
        }
    }
    const detail::Frame f{lo, hi, 0.0, static_cast<double>(top)};
    std::ostringstream os;
    os << detail::open();
    detail::axes(os, f, title, xlabel, "windows");
    std::vector<std::pair<std::string, std::string>> items;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        for (std::size_t b = 0; b < bins; ++b) {
            if (counts[g][b] == 0) continue;
            const double xa = f.px(lo + width * static_cast<double>(b)), xb = f.px(lo + width * static_cast<double>(b + 1));
            const double ya = f.py(static_cast<double>(counts[g][b])), yb = f.py(0.0);
            os << "<rect x=\"" << detail::num(xa) << "\" y=\"" << detail::num(ya) << "\" width=\""
               << detail::num(xb - xa) << "\" height=\"" << detail::num(yb - ya) << "\" fill=\"" << groups[g].color
               << "\" fill-opacity=\"0.5\"/>\n";
        }
        items.emplace_back(groups[g].name, groups[g].color);
    }
    if (marker) {
        const double x = f.px(*marker);
        os << "<line x1=\"" << detail::num(x) << "\" y1=\"" << detail::kTop << "\" x2=\"" << detail::num(x)
           << "\" y2=\"" << detail::kHeight - detail::kBottom << "\" stroke=\"black\" stroke-dasharray=\"5,4\"/>\n";
        items.emplace_back("threshold", "black");
    }
    detail::legend(os, items);
    os << "</svg>\n";
    return os.str();
}

}  // namespace phasenet::svg
