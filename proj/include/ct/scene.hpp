#pragma once

#include <cstdint>
#include <string>

#include "ct/camera.hpp"
#include "ct/image.hpp"
#include "ct/mesh.hpp"
#include "ct/sim.hpp"
#include "ct/splat.hpp"

namespace ct {

struct SceneConfig {
  ClothTemplate cloth = ClothTemplate::TOWEL;
  double cloth_width = 0.2;
  double cloth_height = 0.2;
  int resolution = 8;      // vertices per side for TOWEL
  int views = 4;
  int image_width = 128;
  int image_height = 128;
  int timesteps = 16;
  double pixel_noise = 0.0;  // additive Gaussian sigma on observations
  int gaussians_per_face = 2;
  double substep_target = 0.002;  // integrator substep (s)
  double camera_radius = 0.55;
  double focal_factor = 1.4;  // focal = factor * image_width
  ClothParams params;         // dt/substeps resolved from the trajectory
  std::uint64_t seed = 0;
};

// Ground-truth trajectory plus the multi-view observations rendered from a
// procedurally colored cloud attached to the true mesh.
struct Scene {
  SceneConfig config;
  AugmentedMesh rest;  // t = 0 state; owns topology and rest quantities
  std::vector<std::vector<Vec3>> gt_positions;   // (T+1) x N
  std::vector<std::vector<Vec3>> gt_velocities;  // (T+1) x N
  std::vector<std::vector<Image>> observations;  // (T+1) x K
  std::vector<CameraView> cameras;
  ActionTrajectory trajectory;
  GaussianCloud gt_cloud;
  ClothParams params;
  int grasped_vertex = 0;

  int steps() const { return static_cast<int>(gt_positions.size()) - 1; }
  AugmentedMesh state(int t) const {
    return rest.with_state(gt_positions[static_cast<std::size_t>(t)],
                           gt_velocities[static_cast<std::size_t>(t)]);
  }
};

std::vector<CameraView> hemisphere_cameras(const Vec3& target, int count, double radius,
                                           double focal_px, int width, int height);

// Checkerboard face colors with a small deterministic per-face jitter.
GaussianCloud checkerboard_cloud(const AugmentedMesh& mesh, int per_face, std::uint64_t seed);

Scene generate_scene(const SceneConfig& config);

void save_scene(const std::string& dir, const Scene& scene);
Scene load_scene(const std::string& dir);

void save_gaussian_cloud(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_gaussian_cloud(const std::string& path);

}  // namespace ct
