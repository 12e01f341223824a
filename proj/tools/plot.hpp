#pragma once

#include "splat/image.hpp"

#include <array>
#include <string>
#include <vector>

namespace splat::cli {

struct LineChart {
  int width = 640;
  int height = 360;
  std::vector<double> xs;
  std::vector<double> ys;
  std::array<double, 3> color = {0.12, 0.35, 0.75};
};

// White background, axis box, light grid at 5 divisions, the series as a
// polyline with square markers. The y range is padded by 5% of its span.
Image render_chart(const LineChart& chart);

void write_chart(const std::string& path, const LineChart& chart);

} // namespace splat::cli
