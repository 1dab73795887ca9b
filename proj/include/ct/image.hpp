#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ct {

// Dense RGB image, channels interleaved, values in [0,1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> px;  // size = width*height*3

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), px(static_cast<std::size_t>(w) * h * 3, fill) {}

  double* at(int x, int y) { return px.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  const double* at(int x, int y) const { return px.data() + 3 * (static_cast<std::size_t>(y) * width + x); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// 8-bit binary PPM (P6). Quantizes with round-to-nearest on write.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

double mean_abs_diff(const Image& a, const Image& b);
double mean_sq_diff(const Image& a, const Image& b);

}  // namespace ct
