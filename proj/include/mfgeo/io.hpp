#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfgeo {

// Shortest round-trip decimal form; locale independent, so identical
// doubles always print identically.
std::string format_number(double x);
// General format with at most `digits` significant digits, for console output.
std::string format_significant(double x, int digits = 10);

// Minimal CSV table: a fixed header and rows of numbers or text cells.
class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header);

    CsvTable& row();
    CsvTable& add(double x);
    CsvTable& add(long long x);
    CsvTable& add(int x) { return add(static_cast<long long>(x)); }
    CsvTable& add(std::size_t x) { return add(static_cast<long long>(x)); }
    CsvTable& add(std::string_view text);

    std::size_t rows() const { return cells_.size(); }
    void write(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> cells_;
};

void write_text_file(const std::filesystem::path& path, std::string_view text);
std::string read_text_file(const std::filesystem::path& path);

struct HeatmapSpec {
    std::string title;
    int columns = 0;  // values are row-major, rows * columns
    int rows = 0;
    int cell_pixels = 6;
};

// Static SVG heatmap on a blue-white-red diverging ramp over [min, max];
// NaN cells are left blank.
std::string svg_heatmap(std::span<const double> values, const HeatmapSpec& spec);

struct CurveSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
};

struct CurveSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    bool log_y = false;
};

// Line chart with square markers, axis ticks at the data range ends and a
// legend. Log axes drop nonpositive points.
std::string svg_curves(const std::vector<CurveSeries>& series, const CurveSpec& spec);

}  // namespace mfgeo
