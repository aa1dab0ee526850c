#include "nuq/plot.hpp"

#include <algorithm>
#include <cmath>

#include "nuq/errors.hpp"
#include "nuq/image_io.hpp"

namespace nuq {

void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      const std::vector<double>& marker_x, const std::string& x_label,
                      const std::string& y_label, int width, int height) {
  (void)x_label;
  (void)y_label;
  if (series.empty()) throw ConfigError("render_line_plot: no series");

  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ConfigError("render_line_plot: x/y length mismatch");
    for (double v : s.x) {
      xmin = std::min(xmin, v);
      xmax = std::max(xmax, v);
    }
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (!(xmax > xmin)) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  if (!(ymax > ymin)) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  // Pad the y range a little so flat-ish curves stay visible.
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  const int ml = 50, mr = 15, mt = 15, mb = 35;  // margins
  RgbImage img(width, height);
  auto to_px = [&](double x, double y) {
    int px = ml + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (width - ml - mr)));
    int py = height - mb -
             static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (height - mt - mb)));
    return std::pair<int, int>(px, py);
  };

  // Light gridlines at quarters.
  for (int i = 0; i <= 4; ++i) {
    int gx = ml + i * (width - ml - mr) / 4;
    int gy = mt + i * (height - mt - mb) / 4;
    img.line(gx, mt, gx, height - mb, 230, 230, 230);
    img.line(ml, gy, width - mr, gy, 230, 230, 230);
  }

  // Vertical markers (e.g. bounce frames).
  for (double mx : marker_x) {
    if (mx < xmin || mx > xmax) continue;
    auto [px, py] = to_px(mx, ymin);
    (void)py;
    img.line(px, mt, px, height - mb, 240, 150, 150);
  }

  // Axes.
  img.line(ml, mt, ml, height - mb, 0, 0, 0);
  img.line(ml, height - mb, width - mr, height - mb, 0, 0, 0);

  for (const auto& s : series) {
    for (size_t i = 1; i < s.x.size(); ++i) {
      auto [x0, y0] = to_px(s.x[i - 1], s.y[i - 1]);
      auto [x1, y1] = to_px(s.x[i], s.y[i]);
      img.line(x0, y0, x1, y1, s.red, s.green, s.blue);
    }
    // Point markers (small crosses) so single-point series remain visible.
    for (size_t i = 0; i < s.x.size(); ++i) {
      auto [px, py] = to_px(s.x[i], s.y[i]);
      img.line(px - 2, py, px + 2, py, s.red, s.green, s.blue);
      img.line(px, py - 2, px, py + 2, s.red, s.green, s.blue);
    }
  }
  img.save(path);
}

}  // namespace nuq
