#pragma once

#include "halbach/harness.hpp"

#include <string>
#include <vector>

namespace halbach {

struct PlotSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;  // NaN entries break the line
  std::string color = "#1f77b4";
  bool markers = true;
};

/// Axis-aligned line chart rendered as a standalone SVG document. Bands are
/// grey x-intervals drawn behind the data.
struct LinePlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_y = false;
  std::vector<PlotSeries> series;
  std::vector<std::pair<double, double>> bands;
  int width = 800;
  int height = 450;

  std::string render() const;
};

/// |mean − truth| per coordinate of the report ring for prior and posterior.
std::string deviation_plot_svg(const ValidationReport& report);

/// E_rel of prior and posterior means against z with the fringe shaded.
std::string error_profile_svg(const ApplicationReport& report);

}  // namespace halbach
