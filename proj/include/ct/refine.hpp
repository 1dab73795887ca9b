#pragma once

#include <cstdint>
#include <optional>

#include "ct/camera.hpp"
#include "ct/gns.hpp"
#include "ct/losses.hpp"
#include "ct/scene.hpp"
#include "ct/splat.hpp"
#include "ct/tape.hpp"

namespace ct {

// Time-conditioned residual over vertex positions: a 3-layer ReLU MLP on a
// sinusoidal encoding of normalized time, output-layer weights drawn from
// N(0, 1e-4) so the initial residual is close to zero.
struct ResidualField {
  int n_vertices = 0;
  int width = 64;
  MlpParams mlp;  // 12 -> width -> width -> 3N

  static ResidualField init(int n_vertices, int width, std::uint64_t seed);
  std::vector<Vec3> offsets(double t_hat) const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);
};

// sin/cos of 2^j pi t for j = 0..5
Eigen::Matrix<double, 1, 12> encode_time(double t_hat);

enum class UpdateMode { ITERATIVE, ROLLOUT };

struct UpdateConfig {
  LossWeights weights;
  UpdateMode mode = UpdateMode::ROLLOUT;
  int horizon = 1;            // ITERATIVE prediction horizon H
  int epochs = 120;           // per refinement call
  double lr = 5e-3;
  int field_width = 64;
  int ssim_window = 7;
  int views = -1;             // -1: all cameras
  bool use_residual_field = true;  // false: optimize per-frame offsets directly
  int checkpoint_interval = 0;     // >0: record (wall s, MTE) during refinement
  std::uint64_t seed = 0;
};

struct LossRecord {
  double obs = 0, ssim = 0, iso = 0, magn = 0, total = 0;
};

// One refinement window: a fixed anchor state (the last known/refined state)
// followed by the prior's predictions to refine against their observations.
struct RefineWindow {
  std::optional<AugmentedMesh> anchor;
  std::vector<AugmentedMesh> predicted;
  std::vector<std::vector<Image>> observations;  // per predicted state
  std::vector<double> t_hats;                    // per predicted state, in [0,1]
  double dt = 1.0;                               // for velocity recomputation
};

struct RefineResult {
  std::vector<AugmentedMesh> refined;
  std::vector<LossRecord> curve;
  double initial_total = 0;
  double final_total = 0;
};

// Called every `checkpoint_interval` epochs with the best-so-far refined
// states (used for convergence-time instrumentation).
using RefineObserver = std::function<void(int epoch, const std::vector<AugmentedMesh>& best_refined)>;

RefineResult refine_states(const RefineWindow& window, const GaussianCloud& cloud,
                           const AugmentedMesh& rest_mesh, const std::vector<CameraView>& cameras,
                           const UpdateConfig& config, ResidualField* field,
                           const RefineObserver* observer = nullptr);

// Composite loss over an aligned mesh/observation sequence (entries may have
// no observations, e.g. the anchor).
LossValues compute_losses(std::span<const AugmentedMesh> meshes,
                          std::span<const std::vector<Image>> observations, const GaussianCloud& cloud,
                          const AugmentedMesh& rest_mesh, const std::vector<CameraView>& cameras,
                          const UpdateConfig& config);

// Observation-only refinement of a single state (used to correct a bad mesh
// initialization from the t=0 views).
AugmentedMesh refine_single_state(const AugmentedMesh& mesh, const GaussianCloud& cloud,
                                  const std::vector<Image>& observations,
                                  const std::vector<CameraView>& cameras, const UpdateConfig& config);

struct TrackResult {
  std::vector<AugmentedMesh> refined;           // t = 1..T
  std::vector<AugmentedMesh> predicted;         // unrefined prior states, t = 1..T
  std::vector<LossRecord> losses;               // concatenated refinement curves
  std::vector<double> window_seconds;
  double wall_seconds = 0;
  std::vector<std::pair<double, double>> time_mte_checkpoints;  // (s, mm)
};

// ROLLOUT: one full prior rollout refined jointly. ITERATIVE: repeat
// {predict H, refine H, feed refined states back}.
TrackResult track(const Scene& scene, const TransitionPrior& prior, const GaussianCloud& cloud,
                  const AugmentedMesh& estimator_rest, const UpdateConfig& config);

}  // namespace ct
