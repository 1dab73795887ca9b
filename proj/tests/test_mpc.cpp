#include "ct/mpc.hpp"
#include "doctest.h"

using namespace ct;

TEST_CASE("half fold goal mirrors the far half") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 5);
  GoalState g = half_fold_goal(m);
  for (std::size_t i = 0; i < m.vertex_count(); ++i) {
    const Vec3& p = m.vertices()[i];
    const Vec3& q = g.positions[i];
    CHECK(q.y() == p.y());  // y preserved exactly
    if (p.x() > 0.1 + 1e-9) {
      CHECK(q.x() == doctest::Approx(0.2 - p.x()).epsilon(1e-12));
      CHECK(q.z() == doctest::Approx(0.003).epsilon(1e-12));
    } else {
      CHECK(q.x() == p.x());
      CHECK(q.z() == p.z());
    }
  }
  // a far-edge vertex at x = 0.2 maps onto x = 0
  bool found = false;
  for (std::size_t i = 0; i < m.vertex_count(); ++i)
    if (std::abs(m.vertices()[i].x() - 0.2) < 1e-12) {
      CHECK(g.positions[i].x() == doctest::Approx(0.0));
      found = true;
    }
  CHECK(found);
}

TEST_CASE("half fold goal rejects non-rectangular cloth") {
  AugmentedMesh shorts = make_template_mesh(ClothTemplate::SHORTS, 0.2, 0.2, 10);
  CHECK_THROWS_AS(half_fold_goal(shorts), std::invalid_argument);
}

TEST_CASE("plan_step with one candidate returns the nominal action") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 5);
  ClothParams params;
  PerturbedSimPrior prior(params, 1.0, 1.0);
  GoalState goal = half_fold_goal(m);
  PlanConfig cfg;
  cfg.n_candidates = 1;
  cfg.dt = 0.5;
  std::vector<Vec3> nominal = {Vec3(0.01, 0, 0.02), Vec3(0.01, 0, 0.01)};
  std::vector<AugmentedMesh> hist = {m};
  PlanOutcome out = plan_step(hist, goal, prior, cfg, nominal, 0, 0);
  CHECK((out.action - nominal[0]).norm() == 0.0);
}

TEST_CASE("argmin dominance: chosen cost never exceeds the nominal's cost") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 5);
  ClothParams params;
  PerturbedSimPrior prior(params, 1.0, 1.0);
  GoalState goal;
  goal.positions = m.vertices();  // goal = current state
  PlanConfig cfg;
  cfg.dt = 0.5;
  cfg.n_candidates = 8;
  std::vector<Vec3> zero(3, Vec3::Zero());
  std::vector<AugmentedMesh> hist = {m};
  PlanOutcome with_noise = plan_step(hist, goal, prior, cfg, zero, 0, 0);
  cfg.n_candidates = 1;
  PlanOutcome nominal_only = plan_step(hist, goal, prior, cfg, zero, 0, 0);
  CHECK(with_noise.predicted_cost <= nominal_only.predicted_cost);
}

TEST_CASE("best predicted cost is non-increasing in the candidate count") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 5);
  ClothParams params;
  PerturbedSimPrior prior(params, 0.7, 0.7);
  GoalState goal = half_fold_goal(m);
  std::vector<Vec3> nominal(4, Vec3(0.005, 0, 0.01));
  std::vector<AugmentedMesh> hist = {m};
  double prev = std::numeric_limits<double>::infinity();
  for (int n : {4, 16, 64}) {
    PlanConfig cfg;
    cfg.dt = 0.5;
    cfg.n_candidates = n;
    cfg.seed = 42;
    PlanOutcome out = plan_step(hist, goal, prior, cfg, nominal, 0, 0);
    CHECK(out.predicted_cost <= prev + 1e-15);
    prev = out.predicted_cost;
  }
}

TEST_CASE("plan_step is deterministic given the seed stream") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 5);
  ClothParams params;
  PerturbedSimPrior prior(params, 0.7, 0.7);
  GoalState goal = half_fold_goal(m);
  std::vector<Vec3> nominal(4, Vec3(0.005, 0, 0.01));
  std::vector<AugmentedMesh> hist = {m};
  PlanConfig cfg;
  cfg.dt = 0.5;
  cfg.seed = 7;
  PlanOutcome a = plan_step(hist, goal, prior, cfg, nominal, 0, 0);
  PlanOutcome b = plan_step(hist, goal, prior, cfg, nominal, 0, 0);
  CHECK((a.action - b.action).norm() == 0.0);
  CHECK(a.predicted_cost == b.predicted_cost);
}

TEST_CASE("zero-length episode reports the initial distance to goal") {
  ClothParams params;
  FoldTask task = make_half_fold_task(0.2, 5, params, 3);
  PerturbedSimPrior prior(params, 0.6, 0.6);
  PlanConfig cfg;
  cfg.total_steps = 0;
  cfg.dt = 1.0;
  FoldResult r = closed_loop_fold(task, prior, FoldStrategy::FIXED, cfg);
  double expected = goal_mse(task.initial, task.goal);
  CHECK(r.final_mse == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("executed grasped displacement equals action*dt") {
  ClothParams params;
  FoldTask task = make_half_fold_task(0.2, 5, params, 4);
  PerturbedSimPrior prior(params, 0.6, 0.6);
  PlanConfig cfg;
  cfg.total_steps = 3;
  cfg.dt = 1.0;
  cfg.n_candidates = 4;
  cfg.seed = 5;
  FoldResult r = closed_loop_fold(task, prior, FoldStrategy::MPC_ORACLE, cfg);
  REQUIRE(r.steps.size() == 3);
  Vec3 expected = task.initial.vertices()[static_cast<std::size_t>(task.grasped_vertex)];
  for (const auto& s : r.steps) expected += s.action * cfg.dt;
  CHECK((r.final_positions[static_cast<std::size_t>(task.grasped_vertex)] - expected).norm() < 1e-9);
}
