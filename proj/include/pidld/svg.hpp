#pragma once

#include <string>
#include <vector>

namespace pidld {

struct Series {
  std::string name;
  std::vector<double> xs;
  std::vector<double> ys;
};

struct ChartStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  int width = 880;
  int height = 560;
};

// Standalone SVG line chart with axes, ticks, and a legend. Output is a pure
// function of the inputs (no timestamps or environment metadata), so repeated
// renders are byte-identical. Comments are embedded as XML comments.
void render_line_chart(const std::string& path, const ChartStyle& style,
                       const std::vector<Series>& series,
                       const std::vector<std::string>& comments = {});

struct HeatmapStyle {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::string value_label;
  double v_min = 0.0;  // values are clamped to [v_min, v_max] for coloring
  double v_max = 1.0;
  int width = 880;
  int height = 640;
};

// Cell-grid heat map: values is row-major with ys.size() rows and xs.size()
// columns (xs/ys are the cell-center coordinates); overlays are drawn as
// lines in data coordinates on top of the grid.
void render_heatmap(const std::string& path, const HeatmapStyle& style,
                    const std::vector<double>& xs, const std::vector<double>& ys,
                    const std::vector<double>& values,
                    const std::vector<Series>& overlays = {},
                    const std::vector<std::string>& comments = {});

}  // namespace pidld
