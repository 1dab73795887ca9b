#pragma once

#include "ct/camera.hpp"
#include "ct/image.hpp"
#include "ct/mesh.hpp"
#include "ct/splat.hpp"

namespace ct {

struct FitSchedule {
  int iterations = 600;
  int warmup_no_reg = 150;      // photometric loss only before this iteration
  double ssim_weight = 0.1;     // SSIM term weight once regularization is on
  int ssim_window = 7;
  int prune_interval = 100;
  double prune_threshold = 0.3;  // on sigmoid(opacity_logit)
  int anneal_iters = 400;        // cosine learning-rate anneal, then frozen
  double lr_floor = 0.1;         // fraction of the initial rate after the anneal
  double lr_color = 0.02;
  double lr_opacity = 0.03;
  double lr_scales = 0.004;
  double lr_rotation = 0.002;
  double lr_bc = 0.004;
};

struct FitResult {
  GaussianCloud cloud;
  double initial_obs_loss = 0;
  double final_obs_loss = 0;
  std::vector<double> curve;  // per-iteration photometric loss
};

// Gradient descent (Adam rule) on the photometric loss over color, opacity,
// scales, local rotations and barycentric coordinates, with face
// reassignment when coordinates go negative and periodic opacity pruning.
FitResult fit_appearance(const GaussianCloud& init, const AugmentedMesh& mesh0,
                         const std::vector<Image>& observations,
                         const std::vector<CameraView>& cameras, const FitSchedule& schedule,
                         bool parallel = true);

}  // namespace ct
