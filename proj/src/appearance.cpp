#include "ct/appearance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ct/losses.hpp"
#include "ct/tape.hpp"

namespace ct {

namespace {

double lr_multiplier(int it, const FitSchedule& s) {
  if (it >= s.anneal_iters) return s.lr_floor;
  double c = 0.5 * (1.0 + std::cos(M_PI * it / std::max(1, s.anneal_iters)));
  return s.lr_floor + (1.0 - s.lr_floor) * c;
}

void apply_constraints(GaussianCloud& cloud, const AugmentedMesh& mesh) {
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    cloud.rotation[i].normalize();
    for (int k = 0; k < 3; ++k)
      cloud.log_scales[i][k] = std::clamp(cloud.log_scales[i][k], kLogScaleMin, kLogScaleMax);
    cloud.bc[i].normalize();
    for (int hop = 0; hop < 8; ++hop) {
      auto [f, b] = reassign_face(mesh, cloud.face_id[i], cloud.bc[i]);
      bool moved = f != cloud.face_id[i];
      cloud.face_id[i] = f;
      cloud.bc[i] = b;
      if (!moved) break;
    }
  }
}

}  // namespace

FitResult fit_appearance(const GaussianCloud& init, const AugmentedMesh& mesh0,
                         const std::vector<Image>& observations,
                         const std::vector<CameraView>& cameras, const FitSchedule& schedule,
                         bool parallel) {
  if (observations.empty() || cameras.empty()) throw std::invalid_argument("need at least one view");
  if (observations.size() != cameras.size())
    throw std::invalid_argument("observations/cameras count mismatch");

  FitResult result;
  GaussianCloud cloud = init;
  apply_constraints(cloud, mesh0);
  result.cloud = cloud;

  Adam opt_color, opt_opacity, opt_scales, opt_rotation, opt_bc;
  double best_loss = std::numeric_limits<double>::infinity();

  double total_px = 0;
  for (const auto& o : observations) total_px += static_cast<double>(o.px.size());

  for (int it = 0; it < schedule.iterations; ++it) {
    const std::size_t n = cloud.size();
    if (n == 0) throw std::runtime_error("all Gaussians pruned during appearance fitting");

    bool use_ssim = schedule.ssim_weight > 0 && it >= schedule.warmup_no_reg;
    RenderGrads grads;
    grads.resize(mesh0.vertex_count(), n);
    double obs_loss = 0, ssim_loss = 0;
    for (std::size_t k = 0; k < cameras.size(); ++k) {
      RenderOutput out = render_view(cloud, mesh0, mesh0, cameras[k], parallel);
      obs_loss += sum_sq_diff(out.rgb, observations[k]) / total_px;
      Image pixel_grad(out.rgb.width, out.rgb.height);
      add_mse_pixel_grad(out.rgb, observations[k], 1.0 / total_px, pixel_grad);
      if (use_ssim) {
        ssim_loss += (1.0 - ssim_mean(out.rgb, observations[k], schedule.ssim_window)) /
                     static_cast<double>(cameras.size());
        add_ssim_pixel_grad(out.rgb, observations[k], schedule.ssim_window,
                            -schedule.ssim_weight / static_cast<double>(cameras.size()), pixel_grad);
      }
      grads.add(render_backward(out, cloud, mesh0, mesh0, cameras[k], pixel_grad, parallel));
    }
    double loss = obs_loss + schedule.ssim_weight * ssim_loss;
    result.curve.push_back(obs_loss);
    if (it == 0) result.initial_obs_loss = obs_loss;

    double mul = lr_multiplier(it, schedule);
    auto step_vec3 = [&](Adam& opt, double lr, std::vector<Vec3>& p, const std::vector<Vec3>& g) {
      std::vector<double> pf(3 * n), gf(3 * n);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
          pf[3 * i + static_cast<std::size_t>(c)] = p[i][c];
          gf[3 * i + static_cast<std::size_t>(c)] = g[i][c];
        }
      opt.set_lr(lr * mul);
      opt.step(pf, gf);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) p[i][c] = pf[3 * i + static_cast<std::size_t>(c)];
    };

    step_vec3(opt_color, schedule.lr_color, cloud.color, grads.d_color);
    step_vec3(opt_scales, schedule.lr_scales, cloud.log_scales, grads.d_log_scales);
    {
      std::vector<double> bcv(3 * n), bcg(3 * n);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) {
          bcv[3 * i + static_cast<std::size_t>(c)] = cloud.bc[i][c];
          bcg[3 * i + static_cast<std::size_t>(c)] = grads.d_bc[i][c];
        }
      opt_bc.set_lr(schedule.lr_bc * mul);
      opt_bc.step(bcv, bcg);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 3; ++c) cloud.bc[i][c] = bcv[3 * i + static_cast<std::size_t>(c)];
    }
    {
      std::vector<double> qv(4 * n), qg(4 * n);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c) {
          qv[4 * i + static_cast<std::size_t>(c)] = cloud.rotation[i](c);
          qg[4 * i + static_cast<std::size_t>(c)] = grads.d_rotation[i](c);
        }
      opt_rotation.set_lr(schedule.lr_rotation * mul);
      opt_rotation.step(qv, qg);
      for (std::size_t i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c) cloud.rotation[i](c) = qv[4 * i + static_cast<std::size_t>(c)];
    }
    opt_opacity.set_lr(schedule.lr_opacity * mul);
    opt_opacity.step(cloud.opacity_logit, grads.d_opacity_logit);

    // colors live in [0,1]
    for (auto& c : cloud.color) c = c.cwiseMax(0.0).cwiseMin(1.0);
    apply_constraints(cloud, mesh0);

    if (schedule.prune_interval > 0 && (it + 1) % schedule.prune_interval == 0) {
      std::vector<std::uint8_t> keep(n, 1);
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        if (1.0 / (1.0 + std::exp(-cloud.opacity_logit[i])) < schedule.prune_threshold) {
          keep[i] = 0;
          any = true;
        }
      }
      if (any) {
        cloud.remove(keep);
        if (cloud.size() == 0) throw std::runtime_error("all Gaussians pruned during appearance fitting");
        std::vector<std::uint8_t> keep3, keep4;
        for (std::size_t i = 0; i < n; ++i)
          for (int c = 0; c < 3; ++c) keep3.push_back(keep[i]);
        for (std::size_t i = 0; i < n; ++i)
          for (int c = 0; c < 4; ++c) keep4.push_back(keep[i]);
        opt_color.compact(keep3);
        opt_scales.compact(keep3);
        opt_bc.compact(keep3);
        opt_rotation.compact(keep4);
        opt_opacity.compact(keep);
        best_loss = std::numeric_limits<double>::infinity();  // sizes changed, restart best tracking
        result.cloud = cloud;
      }
    }
    if (loss < best_loss) {
      best_loss = loss;
      result.cloud = cloud;
    }
  }

  // final photometric loss of the returned cloud
  double final_obs = 0;
  for (std::size_t k = 0; k < cameras.size(); ++k) {
    RenderOutput out = render_view(result.cloud, mesh0, mesh0, cameras[k], parallel);
    final_obs += sum_sq_diff(out.rgb, observations[k]) / total_px;
  }
  result.final_obs_loss = final_obs;
  return result;
}

}  // namespace ct
