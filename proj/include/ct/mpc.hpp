#pragma once

#include <cstdint>

#include "ct/gns.hpp"
#include "ct/refine.hpp"
#include "ct/scene.hpp"

namespace ct {

enum class FoldStrategy { FIXED, MPC_OL, MPC_CS, MPC_ORACLE };
FoldStrategy fold_strategy_from_string(const std::string& s);
std::string to_string(FoldStrategy s);

struct PlanConfig {
  int n_candidates = 32;
  int horizon = 4;
  Vec3 control_variance = Vec3(6e-5, 6e-5, 6e-5);  // per-axis, (m/s)^2
  int total_steps = 12;
  double dt = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GoalState {
  std::vector<Vec3> positions;
};

// Far half mirrored across the fold mid-line, lifted by one cloth thickness
// (3 mm); near half unchanged. Requires a flat rectangular cloth.
GoalState half_fold_goal(const AugmentedMesh& mesh);

double goal_mse(const AugmentedMesh& mesh, const GoalState& goal);

struct PlanOutcome {
  Vec3 action = Vec3::Zero();
  double predicted_cost = 0;
  std::vector<Vec3> best_sequence;  // for warm starting
};

// Random-shooting step: N candidate sequences sampled around the nominal
// (candidate 0 is the nominal itself), rolled out H steps through the prior,
// scored by summed squared vertex distance to the goal.
PlanOutcome plan_step(std::span<const AugmentedMesh> history, const GoalState& goal,
                      const TransitionPrior& prior, const PlanConfig& config,
                      std::span<const Vec3> nominal, int grasped_vertex, int step_index);

struct FoldTask {
  AugmentedMesh initial;
  ClothParams params_true;       // execution environment
  int grasped_vertex = 0;
  GoalState goal;
  Vec3 place_point = Vec3::Zero();
  std::vector<CameraView> cameras;  // observation rig for MPC_CS
  GaussianCloud gt_cloud;           // renders observations of the true state
  GaussianCloud est_cloud;          // estimator appearance
  UpdateConfig refine_config;       // per-step refinement for MPC_CS
  double substep_target = 0.002;
};

struct FoldStepRecord {
  int step = 0;
  double predicted_cost = 0;
  Vec3 action = Vec3::Zero();
  double refined_mte_mm = 0;  // estimate vs true state (MPC_CS only)
  double prior_mte_mm = 0;    // unrefined prediction vs true state
};

struct FoldResult {
  double final_mse = 0;  // mean squared vertex distance to goal (m^2)
  std::vector<FoldStepRecord> steps;
  std::vector<Vec3> final_positions;
};

// FIXED: straight pick-to-place velocity profile. MPC_OL: plans once on the
// prior and executes blind. MPC_CS: replans each step from the
// splatting-refined state estimate. MPC_ORACLE: replans from the true state.
FoldResult closed_loop_fold(const FoldTask& task, const TransitionPrior& prior, FoldStrategy strategy,
                            const PlanConfig& config);

// Standard half-fold setup on a towel; seed jitters the initial state.
FoldTask make_half_fold_task(double cloth_size, int resolution, const ClothParams& params,
                             std::uint64_t seed, int views = 4, int image_wh = 64);

}  // namespace ct
