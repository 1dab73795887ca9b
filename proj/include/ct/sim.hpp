#pragma once

#include <cstdint>
#include <optional>

#include "ct/mesh.hpp"

namespace ct {

// Mass-spring cloth with semi-implicit Euler integration. Structural springs
// live on mesh edges, bending springs on opposite-vertex pairs across shared
// edges. The ground plane is z >= 0.
struct ClothParams {
  double mass_per_vertex = 0.002;   // kg
  double stretch_stiffness = 80.0;  // N/m
  double bending_stiffness = 1.0;   // N/m
  double damping = 0.08;            // N*s/m, per-vertex viscous
  double gravity = 9.81;            // m/s^2, acting along -z
  double ground_friction = 0.3;     // kinetic friction coefficient on the plane
  double dt = 0.1;                  // one action step (s)
  int substeps = 50;

  void validate() const;
  ClothParams perturbed(double stiffness_factor, double damping_factor) const;
};

// Pick/place gripper trajectory discretized into per-step Cartesian
// velocities whose displacements telescope exactly from pick to place.
struct ActionTrajectory {
  int pick_vertex = 0;
  Vec3 place_point = Vec3::Zero();
  Vec3 control_point = Vec3::Zero();
  std::vector<Vec3> actions;  // T x 3 velocities (m/s)
  double dt = 0.0;            // seconds per action
  double gripper_speed = 0.0; // sampled scalar speed (m/s)
};

// One action step = `substeps` integrator substeps. The grasped vertex is
// rigidly attached to the gripper: its velocity is the action and its
// position integrates it exactly. Throws on non-finite state.
AugmentedMesh simulate_step(const AugmentedMesh& mesh, const ClothParams& params, const Vec3& action,
                            int grasped_vertex);

// Kinetic plus elastic spring energy (for plausibility checks).
double cloth_energy(const AugmentedMesh& mesh, const ClothParams& params);

// Quadratic Bezier pick/place trajectory. Pick and place are sampled on the
// cloth; the middle control point sits at a height in [0.05, 0.15] m above
// the chord midpoint, tilted by an angle in [-pi/4, pi/4] about the
// pick-place axis. gripper_speed <= 0 samples the speed from [0.005, 0.02]
// m/s; dt is derived so `steps` actions cover the curve at that speed.
ActionTrajectory make_bezier_trajectory(const AugmentedMesh& mesh, std::uint64_t rng_seed, int steps,
                                        double gripper_speed = -1.0);

Vec3 bezier_point(const Vec3& p0, const Vec3& p1, const Vec3& p2, double u);

enum class ClothTemplate { TOWEL, SHORTS, TSHIRT };
ClothTemplate cloth_template_from_string(const std::string& s);
std::string to_string(ClothTemplate t);

// TOWEL: regular grid over [0,w]x[0,h] at z=0. SHORTS/TSHIRT: fixed
// polygonal outlines filled with interior points and Delaunay-triangulated.
AugmentedMesh make_template_mesh(ClothTemplate t, double width = 0.2, double height = 0.2,
                                 int resolution = 8);

}  // namespace ct
