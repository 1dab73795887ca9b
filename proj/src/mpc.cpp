#include "ct/mpc.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ct/appearance.hpp"
#include "ct/metrics.hpp"
#include "ct/rng.hpp"

namespace ct {

FoldStrategy fold_strategy_from_string(const std::string& s) {
  if (s == "fixed") return FoldStrategy::FIXED;
  if (s == "mpc-ol") return FoldStrategy::MPC_OL;
  if (s == "mpc-cs") return FoldStrategy::MPC_CS;
  if (s == "mpc-oracle") return FoldStrategy::MPC_ORACLE;
  throw std::invalid_argument("unknown strategy: " + s);
}

std::string to_string(FoldStrategy s) {
  switch (s) {
    case FoldStrategy::FIXED: return "fixed";
    case FoldStrategy::MPC_OL: return "mpc-ol";
    case FoldStrategy::MPC_CS: return "mpc-cs";
    case FoldStrategy::MPC_ORACLE: return "mpc-oracle";
  }
  return "?";
}

void PlanConfig::validate() const {
  if (n_candidates < 1) throw std::invalid_argument("need at least one candidate");
  if (horizon < 1) throw std::invalid_argument("horizon must be >= 1");
  if (!(control_variance.minCoeff() > 0)) throw std::invalid_argument("control variance must be positive");
}

GoalState half_fold_goal(const AugmentedMesh& mesh) {
  Vec3 lo = mesh.vertices()[0], hi = mesh.vertices()[0];
  double face_area = 0;
  for (const auto& v : mesh.vertices()) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    auto tri = mesh.face_vertices(static_cast<int>(f));
    face_area += 0.5 * (tri[1] - tri[0]).cross(tri[2] - tri[0]).norm();
  }
  double bbox_area = (hi.x() - lo.x()) * (hi.y() - lo.y());
  if (hi.z() - lo.z() > 1e-6 || bbox_area <= 0 || std::abs(face_area - bbox_area) > 0.02 * bbox_area)
    throw std::invalid_argument("half-fold goal requires a flat rectangular cloth");

  const double mid = 0.5 * (lo.x() + hi.x());
  const double thickness = 0.003;
  GoalState goal;
  goal.positions = mesh.vertices();
  for (auto& p : goal.positions) {
    if (p.x() > mid + 1e-12) {
      p.x() = lo.x() + hi.x() - p.x();
      p.z() += thickness;
    }
  }
  return goal;
}

double goal_mse(const AugmentedMesh& mesh, const GoalState& goal) {
  if (mesh.vertex_count() != goal.positions.size())
    throw std::invalid_argument("goal/mesh vertex count mismatch");
  double s = 0;
  for (std::size_t i = 0; i < goal.positions.size(); ++i)
    s += (mesh.vertices()[i] - goal.positions[i]).squaredNorm();
  return s / static_cast<double>(goal.positions.size());
}

PlanOutcome plan_step(std::span<const AugmentedMesh> history, const GoalState& goal,
                      const TransitionPrior& prior, const PlanConfig& config,
                      std::span<const Vec3> nominal, int grasped_vertex, int step_index) {
  config.validate();
  if (history.empty()) throw std::invalid_argument("empty history");
  const int H = static_cast<int>(nominal.size());
  Vec3 sigma = config.control_variance.cwiseSqrt();

  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<Vec3> best_seq;
  bool any_finite = false;
  for (int c = 0; c < config.n_candidates; ++c) {
    std::vector<Vec3> seq(nominal.begin(), nominal.end());
    if (c > 0) {
      // per-candidate stream: candidate sets are nested as N grows
      std::mt19937_64 rng(derive_seed(config.seed, "plan_candidate",
                                      static_cast<std::uint64_t>(step_index) * 100003 +
                                          static_cast<std::uint64_t>(c)));
      std::normal_distribution<double> dist(0.0, 1.0);
      for (auto& a : seq)
        for (int k = 0; k < 3; ++k) a(k) += sigma(k) * dist(rng);
    }
    double cost = 0;
    bool diverged = false;
    std::vector<AugmentedMesh> hist(history.begin(), history.end());
    for (int h = 0; h < H; ++h) {
      AugmentedMesh next;
      try {
        next = prior.predict(hist, seq[static_cast<std::size_t>(h)], grasped_vertex, config.dt);
      } catch (const std::exception&) {
        diverged = true;
        break;
      }
      cost += goal_mse(next, goal);
      hist.push_back(std::move(next));
      if (hist.size() > 8) hist.erase(hist.begin());
    }
    if (diverged) continue;
    any_finite = true;
    if (cost < best_cost) {
      best_cost = cost;
      best_seq = std::move(seq);
    }
  }
  if (!any_finite) throw std::runtime_error("all candidate rollouts diverged");

  PlanOutcome out;
  out.action = best_seq[0];
  out.predicted_cost = best_cost;
  out.best_sequence = std::move(best_seq);
  return out;
}

namespace {

std::vector<Vec3> straight_line_actions(const AugmentedMesh& mesh, int grasped, const Vec3& place,
                                        int steps, double dt) {
  Vec3 pick = mesh.vertices()[static_cast<std::size_t>(grasped)];
  Vec3 v = (place - pick) / (steps * dt);
  return std::vector<Vec3>(static_cast<std::size_t>(steps), v);
}

double state_mte_mm(const AugmentedMesh& a, const AugmentedMesh& b) {
  TrackSet ta, tb;
  ta.frames.push_back(a.vertices());
  tb.frames.push_back(b.vertices());
  return mte_mm(ta, tb);
}

}  // namespace

FoldResult closed_loop_fold(const FoldTask& task, const TransitionPrior& prior, FoldStrategy strategy,
                            const PlanConfig& config) {
  config.validate();
  const int T = config.total_steps;
  const double dt = config.dt;
  ClothParams exec = task.params_true;
  exec.dt = dt;
  exec.substeps = std::max(1, static_cast<int>(std::ceil(dt / task.substep_target)));

  FoldResult result;
  AugmentedMesh true_state = task.initial;
  std::vector<Vec3> fixed = straight_line_actions(task.initial, task.grasped_vertex, task.place_point, T, dt);

  if (strategy == FoldStrategy::FIXED || strategy == FoldStrategy::MPC_OL) {
    std::vector<Vec3> actions = fixed;
    if (strategy == FoldStrategy::MPC_OL) {
      PlanConfig open = config;
      open.horizon = T;
      std::vector<AugmentedMesh> hist = {task.initial};
      PlanOutcome plan = plan_step(hist, task.goal, prior, open, fixed, task.grasped_vertex, 0);
      actions = plan.best_sequence;
      for (int t = 0; t < T; ++t) {
        FoldStepRecord rec;
        rec.step = t;
        rec.predicted_cost = plan.predicted_cost;
        rec.action = actions[static_cast<std::size_t>(t)];
        result.steps.push_back(rec);
      }
    }
    for (int t = 0; t < T; ++t) {
      true_state = simulate_step(true_state, exec, actions[static_cast<std::size_t>(t)], task.grasped_vertex);
      if (strategy == FoldStrategy::FIXED) {
        FoldStepRecord rec;
        rec.step = t;
        rec.action = actions[static_cast<std::size_t>(t)];
        result.steps.push_back(rec);
      }
    }
  } else {
    // closed loop: MPC_CS estimates the state from observations, MPC_ORACLE
    // reads it from the simulator
    std::vector<AugmentedMesh> est_hist = {task.initial};
    std::vector<Vec3> nominal(fixed.begin(), fixed.begin() + std::min<int>(config.horizon, T));
    for (int t = 0; t < T; ++t) {
      PlanOutcome plan = plan_step(est_hist, task.goal, prior, config, nominal, task.grasped_vertex, t);
      true_state = simulate_step(true_state, exec, plan.action, task.grasped_vertex);

      FoldStepRecord rec;
      rec.step = t;
      rec.predicted_cost = plan.predicted_cost;
      rec.action = plan.action;

      AugmentedMesh predicted = prior.predict(est_hist, plan.action, task.grasped_vertex, dt);
      rec.prior_mte_mm = state_mte_mm(predicted, true_state);
      if (strategy == FoldStrategy::MPC_ORACLE) {
        est_hist.push_back(true_state);
        rec.refined_mte_mm = 0;
      } else {
        std::vector<Image> obs;
        obs.reserve(task.cameras.size());
        for (const auto& cam : task.cameras)
          obs.push_back(render_view(task.gt_cloud, true_state, task.initial, cam).rgb);
        RefineWindow window;
        window.anchor = est_hist.back();
        window.predicted = {predicted};
        window.observations = {obs};
        window.t_hats = {static_cast<double>(t + 1) / T};
        window.dt = dt;
        ResidualField field =
            ResidualField::init(static_cast<int>(task.initial.vertex_count()), task.refine_config.field_width,
                                derive_seed(config.seed, "fold_field", static_cast<std::uint64_t>(t)));
        RefineResult r =
            refine_states(window, task.est_cloud, task.initial, task.cameras, task.refine_config, &field);
        rec.refined_mte_mm = state_mte_mm(r.refined[0], true_state);
        est_hist.push_back(r.refined[0]);
      }
      if (est_hist.size() > 8) est_hist.erase(est_hist.begin());
      result.steps.push_back(rec);

      // warm start: shift the winner, repeat its last action
      nominal.assign(plan.best_sequence.begin() + 1, plan.best_sequence.end());
      nominal.push_back(plan.best_sequence.back());
    }
  }

  result.final_mse = goal_mse(true_state, task.goal);
  result.final_positions = true_state.vertices();
  return result;
}

FoldTask make_half_fold_task(double cloth_size, int resolution, const ClothParams& params,
                             std::uint64_t seed, int views, int image_wh) {
  FoldTask task;
  AugmentedMesh mesh = make_template_mesh(ClothTemplate::TOWEL, cloth_size, cloth_size, resolution);

  // per-seed jitter of the initial state (rebuilds rest quantities)
  std::mt19937_64 rng(derive_seed(seed, "fold_init"));
  std::normal_distribution<double> jitter(0.0, 5e-4);
  std::vector<Vec3> x = mesh.vertices();
  for (auto& p : x) {
    p.x() += jitter(rng);
    p.y() += jitter(rng);
  }
  task.initial = AugmentedMesh(x, mesh.topology().faces);
  task.params_true = params;
  task.goal = half_fold_goal(task.initial);

  // grasp the middle of the far (max x) edge
  Vec3 lo = x[0], hi = x[0];
  for (const auto& p : x) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double mid_y = 0.5 * (lo.y() + hi.y());
  int best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x.size(); ++i) {
    double score = std::abs(x[i].x() - hi.x()) * 100 + std::abs(x[i].y() - mid_y);
    if (score < best_score) {
      best_score = score;
      best = static_cast<int>(i);
    }
  }
  task.grasped_vertex = best;
  task.place_point = task.goal.positions[static_cast<std::size_t>(best)];

  double focal = 1.4 * image_wh;
  task.cameras = hemisphere_cameras(task.initial.centroid(), views, 0.55, focal, image_wh, image_wh);
  task.gt_cloud = checkerboard_cloud(task.initial, 2, derive_seed(seed, "fold_cloud"));
  task.est_cloud = task.gt_cloud;  // appearance is known exactly in this setup

  task.refine_config.epochs = 60;
  task.refine_config.lr = 1e-2;
  task.refine_config.seed = seed;
  return task;
}

}  // namespace ct
