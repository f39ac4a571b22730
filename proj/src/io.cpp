#include "mfgeo/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mfgeo {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    if (x == 0.0) return "0";  // folds -0
    std::array<char, 32> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x);
    if (ec != std::errc()) throw std::runtime_error("format_number: conversion failed");
    return std::string(buf.data(), end);
}

std::string format_significant(double x, int digits) {
    if (!std::isfinite(x) || x == 0.0) return format_number(x);
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, digits);
    if (ec != std::errc()) throw std::runtime_error("format_significant: conversion failed");
    return std::string(buf.data(), end);
}

namespace {

std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

std::string xml_escape(std::string_view s) {
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

std::string fixed(double x, int digits = 2) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::fixed, digits);
    if (ec != std::errc()) return "0";
    return std::string(buf.data(), end);
}

std::string tick(double x) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::general, 4);
    if (ec != std::errc()) return "?";
    return std::string(buf.data(), end);
}

std::string ramp(double t) {
    t = std::clamp(t, 0.0, 1.0);
    // blue (0) -> white (0.5) -> red (1)
    double r, g, b;
    if (t < 0.5) {
        const double s = t / 0.5;
        r = 0.23 + 0.77 * s;
        g = 0.30 + 0.70 * s;
        b = 0.75 + 0.25 * s;
    } else {
        const double s = (t - 0.5) / 0.5;
        r = 1.0 - 0.29 * s;
        g = 1.0 - 0.98 * s;
        b = 1.0 - 0.85 * s;
    }
    auto hex = [](double c) {
        static const char* digits = "0123456789abcdef";
        const int v = std::clamp(static_cast<int>(std::lround(c * 255.0)), 0, 255);
        return std::string{digits[v / 16], digits[v % 16]};
    };
    return "#" + hex(r) + hex(g) + hex(b);
}

}  // namespace

CsvTable::CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
    if (header_.empty()) throw std::invalid_argument("CsvTable: empty header");
}

CsvTable& CsvTable::row() {
    if (!cells_.empty() && cells_.back().size() != header_.size())
        throw std::logic_error("CsvTable: previous row has " + std::to_string(cells_.back().size()) + " cells, expected " +
                               std::to_string(header_.size()));
    cells_.emplace_back();
    return *this;
}

CsvTable& CsvTable::add(double x) { return add(std::string_view(format_number(x))); }

CsvTable& CsvTable::add(long long x) { return add(std::string_view(std::to_string(x))); }

CsvTable& CsvTable::add(std::string_view text) {
    if (cells_.empty()) throw std::logic_error("CsvTable: add before row");
    if (cells_.back().size() == header_.size()) throw std::logic_error("CsvTable: too many cells in row");
    cells_.back().push_back(csv_escape(text));
    return *this;
}

void CsvTable::write(std::ostream& out) const {
    for (std::size_t j = 0; j < header_.size(); ++j) out << (j ? "," : "") << csv_escape(header_[j]);
    out << '\n';
    for (const auto& r : cells_) {
        if (r.size() != header_.size()) throw std::logic_error("CsvTable: incomplete row");
        for (std::size_t j = 0; j < r.size(); ++j) out << (j ? "," : "") << r[j];
        out << '\n';
    }
}

void CsvTable::save(const std::filesystem::path& path) const {
    std::ostringstream s;
    write(s);
    write_text_file(path, s.str());
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

std::string svg_heatmap(std::span<const double> values, const HeatmapSpec& spec) {
    if (spec.rows <= 0 || spec.columns <= 0 ||
        values.size() != static_cast<std::size_t>(spec.rows) * static_cast<std::size_t>(spec.columns))
        throw std::invalid_argument("svg_heatmap: value count does not match rows x columns");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : values)
        if (std::isfinite(v)) lo = std::min(lo, v), hi = std::max(hi, v);
    if (!(lo <= hi)) lo = hi = 0.0;
    const double span = hi > lo ? hi - lo : 1.0;
    const int px = spec.cell_pixels;
    const int top = 28, bottom = 24;
    const int width = spec.columns * px, height = spec.rows * px + top + bottom;

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<text x=\"2\" y=\"16\">" << xml_escape(spec.title) << "</text>\n";
    // row 0 drawn at the bottom so the chart's y axis points up
    for (int r = 0; r < spec.rows; ++r) {
        for (int c = 0; c < spec.columns; ++c) {
            const double v = values[static_cast<std::size_t>(r) * spec.columns + c];
            if (!std::isfinite(v)) continue;
            s << "<rect x=\"" << c * px << "\" y=\"" << top + (spec.rows - 1 - r) * px << "\" width=\"" << px
              << "\" height=\"" << px << "\" fill=\"" << ramp((v - lo) / span) << "\"/>\n";
        }
    }
    s << "<text x=\"2\" y=\"" << height - 6 << "\">min " << tick(lo) << "  max " << tick(hi) << "</text>\n";
    s << "</svg>\n";
    return s.str();
}

std::string svg_curves(const std::vector<CurveSeries>& series, const CurveSpec& spec) {
    static const std::array<const char*, 6> colors{"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"};
    auto tx = [&](double x) { return spec.log_x ? std::log10(x) : x; };
    auto ty = [&](double y) { return spec.log_y ? std::log10(y) : y; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!spec.log_x || x > 0) && (!spec.log_y || y > 0);
    };

    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& c : series) {
        if (c.x.size() != c.y.size()) throw std::invalid_argument("svg_curves: x and y lengths differ");
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            if (!usable(c.x[i], c.y[i])) continue;
            x0 = std::min(x0, tx(c.x[i]));
            x1 = std::max(x1, tx(c.x[i]));
            y0 = std::min(y0, ty(c.y[i]));
            y1 = std::max(y1, ty(c.y[i]));
        }
    }
    if (!(x0 <= x1)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 == x0) x0 -= 0.5, x1 += 0.5;
    if (y1 == y0) y0 -= 0.5, y1 += 0.5;

    const double W = 520, H = 340, left = 70, right = 150, top = 30, bottom = 50;
    const double pw = W - left - right, ph = H - top - bottom;
    auto px = [&](double x) { return left + (tx(x) - x0) / (x1 - x0) * pw; };
    auto py = [&](double y) { return top + ph - (ty(y) - y0) / (y1 - y0) * ph; };
    auto untx = [&](double v) { return spec.log_x ? std::pow(10.0, v) : v; };
    auto unty = [&](double v) { return spec.log_y ? std::pow(10.0, v) : v; };

    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    s << "<text x=\"" << left << "\" y=\"18\">" << xml_escape(spec.title) << "</text>\n";
    s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    s << "<text x=\"" << left << "\" y=\"" << top + ph + 16 << "\">" << tick(untx(x0)) << "</text>\n";
    s << "<text x=\"" << left + pw << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"end\">" << tick(untx(x1))
      << "</text>\n";
    s << "<text x=\"" << left - 4 << "\" y=\"" << top + ph << "\" text-anchor=\"end\">" << tick(unty(y0))
      << "</text>\n";
    s << "<text x=\"" << left - 4 << "\" y=\"" << top + 10 << "\" text-anchor=\"end\">" << tick(unty(y1))
      << "</text>\n";
    s << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">"
      << xml_escape(spec.x_label) << (spec.log_x ? " (log)" : "") << "</text>\n";
    s << "<text x=\"14\" y=\"" << top + ph / 2 << "\" transform=\"rotate(-90 14 " << top + ph / 2
      << ")\" text-anchor=\"middle\">" << xml_escape(spec.y_label) << (spec.log_y ? " (log)" : "") << "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& c = series[k];
        const char* color = colors[k % colors.size()];
        std::string points;
        for (std::size_t i = 0; i < c.x.size(); ++i) {
            if (!usable(c.x[i], c.y[i])) continue;
            points += fixed(px(c.x[i])) + "," + fixed(py(c.y[i])) + " ";
            s << "<rect x=\"" << fixed(px(c.x[i]) - 2) << "\" y=\"" << fixed(py(c.y[i]) - 2)
              << "\" width=\"4\" height=\"4\" fill=\"" << color << "\"/>\n";
        }
        if (!points.empty())
            s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"" << points
              << "\"/>\n";
        const double ly = top + 14 + 16 * static_cast<double>(k);
        s << "<rect x=\"" << left + pw + 10 << "\" y=\"" << ly - 8 << "\" width=\"10\" height=\"10\" fill=\""
          << color << "\"/>\n";
        s << "<text x=\"" << left + pw + 24 << "\" y=\"" << ly << "\">" << xml_escape(c.label) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

}  // namespace mfgeo
