#include "nuq/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "nuq/errors.hpp"

namespace nuq {

uint8_t quantize_pixel(double v) {
  double q = std::lround(std::min(std::max(v, 0.0), 1.0) * 255.0);
  return static_cast<uint8_t>(q);
}

void write_pgm(const std::string& path, const Tensor& frame) {
  const Tensor* f = &frame;
  Tensor squeezed;
  if (frame.ndim() == 3 && frame.dim(0) == 1) {
    squeezed = frame.reshaped({frame.dim(1), frame.dim(2)});
    f = &squeezed;
  }
  if (f->ndim() != 2) throw ShapeError("write_pgm: expected [H,W] or [1,H,W] frame");
  int h = f->dim(0), w = f->dim(1);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("write_pgm: cannot open " + path);
  out << "P5\n" << w << " " << h << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(w));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) row[static_cast<size_t>(x)] = quantize_pixel(f->at(y, x));
    out.write(reinterpret_cast<const char*>(row.data()), w);
  }
  if (!out) throw FormatError("write_pgm: write failed for " + path);
}

namespace {
int read_pnm_token(std::istream& in, const std::string& path) {
  // Skips whitespace and '#' comments, then reads one non-negative integer.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw FormatError("read_pgm: truncated header in " + path);
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw FormatError("read_pgm: malformed header in " + path);
  return value;
}
}  // namespace

Tensor read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_pgm: cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || m1 != '5') throw FormatError("read_pgm: not a binary PGM: " + path);
  int w = read_pnm_token(in, path);
  int h = read_pnm_token(in, path);
  int maxval = read_pnm_token(in, path);
  if (maxval != 255) throw FormatError("read_pgm: expected maxval 255 in " + path);
  std::vector<uint8_t> buf(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size()))
    throw FormatError("read_pgm: truncated pixel data in " + path);
  Tensor t({1, h, w});
  for (size_t i = 0; i < buf.size(); ++i) t[static_cast<int64_t>(i)] = buf[i] / 255.0;
  return t;
}

RgbImage::RgbImage(int width, int height, uint8_t r, uint8_t g, uint8_t b)
    : w_(width), h_(height), px_(static_cast<size_t>(width) * height * 3) {
  for (size_t i = 0; i < px_.size(); i += 3) {
    px_[i] = r;
    px_[i + 1] = g;
    px_[i + 2] = b;
  }
}

void RgbImage::set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
  if (x < 0 || x >= w_ || y < 0 || y >= h_) return;
  size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
  px_[i] = r;
  px_[i + 1] = g;
  px_[i + 2] = b;
}

void RgbImage::line(int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
  int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    set(x0, y0, r, g, b);
    if (x0 == x1 && y0 == y1) break;
    int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void RgbImage::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("RgbImage::save: cannot open " + path);
  out << "P6\n" << w_ << " " << h_ << "\n255\n";
  out.write(reinterpret_cast<const char*>(px_.data()), static_cast<std::streamsize>(px_.size()));
  if (!out) throw FormatError("RgbImage::save: write failed for " + path);
}

}  // namespace nuq
