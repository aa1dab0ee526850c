#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nuq/tensor.hpp"

namespace nuq {

/// 8-bit grayscale image I/O (binary PGM, P5). Frames live in [0,1]; writing
/// quantizes with round(v * 255), reading maps back by /255, so a
/// write-then-read round trip is exact on the quantized values.
void write_pgm(const std::string& path, const Tensor& frame);
Tensor read_pgm(const std::string& path);

uint8_t quantize_pixel(double v);

/// Minimal RGB raster for rendered plots (binary PPM, P6).
class RgbImage {
 public:
  RgbImage(int width, int height, uint8_t r = 255, uint8_t g = 255, uint8_t b = 255);

  int width() const { return w_; }
  int height() const { return h_; }
  void set(int x, int y, uint8_t r, uint8_t g, uint8_t b);
  void line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b);
  void save(const std::string& path) const;

 private:
  int w_, h_;
  std::vector<uint8_t> px_;
};

}  // namespace nuq
