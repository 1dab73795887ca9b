#pragma once

#include <span>

#include "ct/image.hpp"
#include "ct/mesh.hpp"

namespace ct {

// The photometric term is a mean over pixels while the temporal terms are
// raw sums over edges/vertices/steps, so the useful weights are far from
// 1: these defaults put each regularizer's gradient at roughly 20-50% of
// the photometric gradient on the desk-scale scenes.
struct LossWeights {
  double obs = 1.0;
  double ssim = 0.02;
  double iso = 1e-4;
  double magn = 0.01;
};

struct LossValues {
  double obs = 0, ssim = 0, iso = 0, magn = 0;
  double total(const LossWeights& w) const {
    return w.obs * obs + w.ssim * ssim + w.iso * iso + w.magn * magn;
  }
};

double sum_sq_diff(const Image& a, const Image& b);
// grad += scale * 2 * (rendered - observed)
void add_mse_pixel_grad(const Image& rendered, const Image& observed, double scale, Image& grad);

// Mean SSIM over channels and all valid `window` x `window` positions,
// uniform window weighting, constants c1 = 0.01^2, c2 = 0.03^2.
double ssim_mean(const Image& a, const Image& b, int window);
// grad_a += upstream * d(mean SSIM)/d(a)
void add_ssim_pixel_grad(const Image& a, const Image& b, int window, double upstream, Image& grad_a);

// Sum over consecutive frames, vertices and their mesh-edge neighborhoods
// (both directions) of |d_t(i,j) - d_{t+1}(i,j)|.
double iso_loss(const MeshTopology& topo, std::span<const std::vector<Vec3>> frames);
void add_iso_grad(const MeshTopology& topo, std::span<const std::vector<Vec3>> frames, double upstream,
                  std::vector<std::vector<Vec3>>& grads);

// Sum over consecutive frames and vertices of |x_t - x_{t+1}|^2.
double magn_loss(std::span<const std::vector<Vec3>> frames);
void add_magn_grad(std::span<const std::vector<Vec3>> frames, double upstream,
                   std::vector<std::vector<Vec3>>& grads);

}  // namespace ct
