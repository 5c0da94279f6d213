// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace clsbench {

struct PlotSeries {
  std::string name;
  std::vector<std::pair<double, double>> xy;
};

struct PlotAxes {
  std::string x_label;
  std::string y_label;
  bool log_x = false;
};

/// Line-and-marker chart, one colour per series, legend on the right.
std::string render_svg(const std::vector<PlotSeries>& series, const PlotAxes& axes);

}  // namespace clsbench
