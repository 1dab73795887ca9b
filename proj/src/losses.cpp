#include "ct/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace ct {

namespace {
constexpr double kC1 = 0.01 * 0.01;  // unit dynamic range
constexpr double kC2 = 0.03 * 0.03;

// integral image with a zero top row / left column
struct Integral {
  int w = 0, h = 0;
  std::vector<double> s;
  void build(const Image& img, int ch) {
    w = img.width;
    h = img.height;
    s.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      double rowsum = 0;
      for (int x = 0; x < w; ++x) {
        rowsum += img.at(x, y)[ch];
        s[idx(x + 1, y + 1)] = s[idx(x + 1, y)] + rowsum;
      }
    }
  }
  void build_product(const Image& a, const Image& b, int ch) {
    w = a.width;
    h = a.height;
    s.assign(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
      double rowsum = 0;
      for (int x = 0; x < w; ++x) {
        rowsum += a.at(x, y)[ch] * b.at(x, y)[ch];
        s[idx(x + 1, y + 1)] = s[idx(x + 1, y)] + rowsum;
      }
    }
  }
  std::size_t idx(int x, int y) const { return static_cast<std::size_t>(y) * (w + 1) + x; }
  // sum over [x0, x0+win) x [y0, y0+win)
  double box(int x0, int y0, int win) const {
    return s[idx(x0 + win, y0 + win)] - s[idx(x0, y0 + win)] - s[idx(x0 + win, y0)] + s[idx(x0, y0)];
  }
};

struct WindowStats {
  double mu_v, mu_w, var_v, var_w, cov, a1, a2, b1, b2, ssim;
};

WindowStats window_stats(const Integral& sv, const Integral& sw, const Integral& svv,
                         const Integral& sww, const Integral& svw, int x0, int y0, int win) {
  double n = static_cast<double>(win) * win;
  WindowStats st;
  st.mu_v = sv.box(x0, y0, win) / n;
  st.mu_w = sw.box(x0, y0, win) / n;
  st.var_v = svv.box(x0, y0, win) / n - st.mu_v * st.mu_v;
  st.var_w = sww.box(x0, y0, win) / n - st.mu_w * st.mu_w;
  st.cov = svw.box(x0, y0, win) / n - st.mu_v * st.mu_w;
  st.a1 = 2 * st.mu_v * st.mu_w + kC1;
  st.a2 = 2 * st.cov + kC2;
  st.b1 = st.mu_v * st.mu_v + st.mu_w * st.mu_w + kC1;
  st.b2 = st.var_v + st.var_w + kC2;
  st.ssim = st.a1 * st.a2 / (st.b1 * st.b2);
  return st;
}

void check_pair(const Image& a, const Image& b, int window) {
  if (a.width != b.width || a.height != b.height) throw std::invalid_argument("ssim image size mismatch");
  if (window < 2 || window > a.width || window > a.height)
    throw std::invalid_argument("ssim window does not fit the image");
}

}  // namespace

double sum_sq_diff(const Image& a, const Image& b) {
  if (a.px.size() != b.px.size()) throw std::invalid_argument("image size mismatch");
  double s = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) {
    double d = a.px[i] - b.px[i];
    s += d * d;
  }
  return s;
}

void add_mse_pixel_grad(const Image& rendered, const Image& observed, double scale, Image& grad) {
  if (rendered.px.size() != observed.px.size() || grad.px.size() != rendered.px.size())
    throw std::invalid_argument("image size mismatch");
  for (std::size_t i = 0; i < rendered.px.size(); ++i)
    grad.px[i] += scale * 2.0 * (rendered.px[i] - observed.px[i]);
}

double ssim_mean(const Image& a, const Image& b, int window) {
  check_pair(a, b, window);
  int nx = a.width - window + 1, ny = a.height - window + 1;
  double total = 0;
  Integral sv, sw, svv, sww, svw;
  for (int ch = 0; ch < 3; ++ch) {
    sv.build(a, ch);
    sw.build(b, ch);
    svv.build_product(a, a, ch);
    sww.build_product(b, b, ch);
    svw.build_product(a, b, ch);
    for (int y0 = 0; y0 < ny; ++y0)
      for (int x0 = 0; x0 < nx; ++x0) total += window_stats(sv, sw, svv, sww, svw, x0, y0, window).ssim;
  }
  return total / (3.0 * nx * ny);
}

void add_ssim_pixel_grad(const Image& a, const Image& b, int window, double upstream, Image& grad_a) {
  check_pair(a, b, window);
  if (grad_a.px.size() != a.px.size()) throw std::invalid_argument("grad image size mismatch");
  int nx = a.width - window + 1, ny = a.height - window + 1;
  double n = static_cast<double>(window) * window;
  double per_window = upstream / (3.0 * nx * ny);

  Integral sv, sw, svv, sww, svw;
  Image c1map(nx, ny), c2map(nx, ny), c3map(nx, ny);  // reuse Image as scalar maps (channel 0)
  for (int ch = 0; ch < 3; ++ch) {
    sv.build(a, ch);
    sw.build(b, ch);
    svv.build_product(a, a, ch);
    sww.build_product(b, b, ch);
    svw.build_product(a, b, ch);
    // per-window coefficient maps: dSSIM/dv_p = (2/n) (C1 + C2 w_p + C3 v_p)
    for (int y0 = 0; y0 < ny; ++y0) {
      for (int x0 = 0; x0 < nx; ++x0) {
        auto st = window_stats(sv, sw, svv, sww, svw, x0, y0, window);
        double inv12 = 1.0 / (st.b1 * st.b2);
        c1map.at(x0, y0)[0] = st.mu_w * (st.a2 - st.a1) * inv12 - st.ssim * st.mu_v * (1.0 / st.b1 - 1.0 / st.b2);
        c2map.at(x0, y0)[0] = st.a1 * inv12;
        c3map.at(x0, y0)[0] = -st.ssim / st.b2;
      }
    }
    Integral i1, i2, i3;
    i1.build(c1map, 0);
    i2.build(c2map, 0);
    i3.build(c3map, 0);
    // windows containing pixel (x,y) have top-left in
    // [x-window+1, x] x [y-window+1, y] clipped to the valid range
    for (int y = 0; y < a.height; ++y) {
      int wy0 = std::max(0, y - window + 1), wy1 = std::min(ny - 1, y);
      if (wy0 > wy1) continue;
      for (int x = 0; x < a.width; ++x) {
        int wx0 = std::max(0, x - window + 1), wx1 = std::min(nx - 1, x);
        if (wx0 > wx1) continue;
        auto boxsum = [&](const Integral& integ) {
          return integ.s[integ.idx(wx1 + 1, wy1 + 1)] - integ.s[integ.idx(wx0, wy1 + 1)] -
                 integ.s[integ.idx(wx1 + 1, wy0)] + integ.s[integ.idx(wx0, wy0)];
        };
        double v = a.at(x, y)[ch], w = b.at(x, y)[ch];
        grad_a.at(x, y)[ch] += per_window * (2.0 / n) * (boxsum(i1) + w * boxsum(i2) + v * boxsum(i3));
      }
    }
  }
}

double iso_loss(const MeshTopology& topo, std::span<const std::vector<Vec3>> frames) {
  double total = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const auto& x0 = frames[t];
    const auto& x1 = frames[t + 1];
    for (const auto& e : topo.edges) {
      double d0 = (x0[static_cast<std::size_t>(e[0])] - x0[static_cast<std::size_t>(e[1])]).norm();
      double d1 = (x1[static_cast<std::size_t>(e[0])] - x1[static_cast<std::size_t>(e[1])]).norm();
      total += 2.0 * std::abs(d0 - d1);  // both edge directions of the neighborhood sum
    }
  }
  return total;
}

void add_iso_grad(const MeshTopology& topo, std::span<const std::vector<Vec3>> frames, double upstream,
                  std::vector<std::vector<Vec3>>& grads) {
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) {
    const auto& x0 = frames[t];
    const auto& x1 = frames[t + 1];
    for (const auto& e : topo.edges) {
      auto i = static_cast<std::size_t>(e[0]), j = static_cast<std::size_t>(e[1]);
      Vec3 u0 = x0[i] - x0[j];
      Vec3 u1 = x1[i] - x1[j];
      double d0 = u0.norm(), d1 = u1.norm();
      if (d0 < 1e-12 || d1 < 1e-12) continue;
      double s = d0 > d1 ? 1.0 : (d0 < d1 ? -1.0 : 0.0);
      double wgt = 2.0 * upstream * s;
      grads[t][i] += (wgt / d0) * u0;
      grads[t][j] -= (wgt / d0) * u0;
      grads[t + 1][i] -= (wgt / d1) * u1;
      grads[t + 1][j] += (wgt / d1) * u1;
    }
  }
}

double magn_loss(std::span<const std::vector<Vec3>> frames) {
  double total = 0;
  for (std::size_t t = 0; t + 1 < frames.size(); ++t)
    for (std::size_t i = 0; i < frames[t].size(); ++i) total += (frames[t][i] - frames[t + 1][i]).squaredNorm();
  return total;
}

void add_magn_grad(std::span<const std::vector<Vec3>> frames, double upstream,
                   std::vector<std::vector<Vec3>>& grads) {
  for (std::size_t t = 0; t + 1 < frames.size(); ++t)
    for (std::size_t i = 0; i < frames[t].size(); ++i) {
      Vec3 d = 2.0 * upstream * (frames[t][i] - frames[t + 1][i]);
      grads[t][i] += d;
      grads[t + 1][i] -= d;
    }
}

}  // namespace ct
