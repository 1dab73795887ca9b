#include "ct/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ct {

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width) * 3);
  for (int y = 0; y < img.height; ++y) {
    const double* src = img.at(0, y);
    for (int i = 0; i < img.width * 3; ++i) {
      double v = std::clamp(src[i], 0.0, 1.0);
      row[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("not a P6 ppm: " + path);
  auto next_token = [&]() {
    // skips whitespace and '#' comment lines
    std::string tok;
    while (f) {
      int c = f.peek();
      if (c == '#') {
        std::string line;
        std::getline(f, line);
        continue;
      }
      if (std::isspace(c)) {
        f.get();
        continue;
      }
      f >> tok;
      break;
    }
    return tok;
  };
  int w = std::stoi(next_token());
  int h = std::stoi(next_token());
  int maxval = std::stoi(next_token());
  if (maxval != 255) throw std::runtime_error("unsupported maxval in " + path);
  f.get();  // single whitespace after header
  Image img(w, h);
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("truncated ppm: " + path);
  for (std::size_t i = 0; i < buf.size(); ++i) img.px[i] = buf[i] / 255.0;
  return img;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (a.px.size() != b.px.size()) throw std::invalid_argument("image size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) s += std::abs(a.px[i] - b.px[i]);
  return a.px.empty() ? 0.0 : s / static_cast<double>(a.px.size());
}

double mean_sq_diff(const Image& a, const Image& b) {
  if (a.px.size() != b.px.size()) throw std::invalid_argument("image size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    double d = a.px[i] - b.px[i];
    s += d * d;
  }
  return a.px.empty() ? 0.0 : s / static_cast<double>(a.px.size());
}

}  // namespace ct
