#pragma once

#include <string>
#include <vector>

namespace mtk {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  /// Half-width of a shaded band around y; empty or all-zero draws no band.
  std::vector<double> band;
};

struct PlotSpec {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;  // non-positive values are dropped
  int width = 720;
  int height = 460;
};

/// Static SVG 1.1 line chart with a legend.
std::string render_svg(const PlotSpec& spec, const std::vector<Series>& series);
void write_svg(const std::string& path, const PlotSpec& spec, const std::vector<Series>& series);

}  // namespace mtk
