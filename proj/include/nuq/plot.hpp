#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace nuq {

struct PlotSeries {
  std::vector<double> x, y;
  std::string label;
  uint8_t red = 40, green = 40, blue = 160;
};

/// Renders a simple line plot (axes, tick labels omitted, optional vertical
/// marker lines) to a binary PPM raster. Deterministic output byte-for-byte.
void render_line_plot(const std::string& path, const std::vector<PlotSeries>& series,
                      const std::vector<double>& marker_x, const std::string& x_label,
                      const std::string& y_label, int width = 640, int height = 400);

}  // namespace nuq
