#include "plot.hpp"

#include "splat/error.hpp"

#include <algorithm>
#include <cmath>

namespace splat::cli {

namespace {

void put(Image& img, int x, int y, const std::array<double, 3>& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height)
    return;
  for (int k = 0; k < 3; ++k)
    img.at(x, y, k) = c[k];
}

void line(Image& img, double x0, double y0, double x1, double y1, const std::array<double, 3>& c,
          int thickness) {
  const int steps = static_cast<int>(std::ceil(std::max(std::abs(x1 - x0), std::abs(y1 - y0)))) + 1;
  const int r = thickness / 2;
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const int x = static_cast<int>(std::lround(x0 + t * (x1 - x0)));
    const int y = static_cast<int>(std::lround(y0 + t * (y1 - y0)));
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        put(img, x + dx, y + dy, c);
  }
}

} // namespace

Image render_chart(const LineChart& chart) {
  require(chart.xs.size() == chart.ys.size(), ErrorKind::dimension_mismatch,
          "chart series lengths differ");
  require(chart.width >= 64 && chart.height >= 64, ErrorKind::invalid_input, "chart too small");
  Image img(chart.width, chart.height, 3, 1.0);
  const int left = 48, right = chart.width - 16, top = 16, bottom = chart.height - 32;
  const std::array<double, 3> grid = {0.88, 0.88, 0.88}, axis = {0.2, 0.2, 0.2};

  for (int k = 0; k <= 5; ++k) {
    const double gx = left + (right - left) * k / 5.0, gy = top + (bottom - top) * k / 5.0;
    line(img, gx, top, gx, bottom, grid, 1);
    line(img, left, gy, right, gy, grid, 1);
  }
  line(img, left, top, left, bottom, axis, 1);
  line(img, left, bottom, right, bottom, axis, 1);
  line(img, right, top, right, bottom, axis, 1);
  line(img, left, top, right, top, axis, 1);
  if (chart.xs.empty())
    return img;

  double xmin = *std::min_element(chart.xs.begin(), chart.xs.end());
  double xmax = *std::max_element(chart.xs.begin(), chart.xs.end());
  double ymin = *std::min_element(chart.ys.begin(), chart.ys.end());
  double ymax = *std::max_element(chart.ys.begin(), chart.ys.end());
  if (xmax == xmin) {
    xmin -= 1;
    xmax += 1;
  }
  const double pad = ymax > ymin ? 0.05 * (ymax - ymin) : std::max(1.0, std::abs(ymax) * 0.05);
  ymin -= pad;
  ymax += pad;
  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (right - left); };
  auto py = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); };

  for (size_t i = 1; i < chart.xs.size(); ++i)
    line(img, px(chart.xs[i - 1]), py(chart.ys[i - 1]), px(chart.xs[i]), py(chart.ys[i]), chart.color, 2);
  for (size_t i = 0; i < chart.xs.size(); ++i) {
    const int cx = static_cast<int>(std::lround(px(chart.xs[i])));
    const int cy = static_cast<int>(std::lround(py(chart.ys[i])));
    for (int dy = -3; dy <= 3; ++dy)
      for (int dx = -3; dx <= 3; ++dx)
        put(img, cx + dx, cy + dy, chart.color);
  }
  return img;
}

void write_chart(const std::string& path, const LineChart& chart) { write_png(path, render_chart(chart)); }

} // namespace splat::cli
