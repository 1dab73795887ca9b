#include "ct/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "ct/rng.hpp"

namespace ct {

void ClothParams::validate() const {
  if (stretch_stiffness < 0 || bending_stiffness < 0) throw std::invalid_argument("negative stiffness");
  if (!(dt > 0)) throw std::invalid_argument("dt must be positive");
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  if (mass_per_vertex <= 0) throw std::invalid_argument("mass must be positive");
}

ClothParams ClothParams::perturbed(double stiffness_factor, double damping_factor) const {
  ClothParams p = *this;
  p.stretch_stiffness *= stiffness_factor;
  p.bending_stiffness *= stiffness_factor;
  p.damping *= damping_factor;
  return p;
}

namespace {

void accumulate_spring(const std::vector<Vec3>& x, int i, int j, double rest, double k,
                       std::vector<Vec3>& f) {
  Vec3 d = x[static_cast<std::size_t>(i)] - x[static_cast<std::size_t>(j)];
  double len = d.norm();
  if (len < 1e-12) return;
  Vec3 fi = (-k * (len - rest) / len) * d;
  f[static_cast<std::size_t>(i)] += fi;
  f[static_cast<std::size_t>(j)] -= fi;
}

}  // namespace

AugmentedMesh simulate_step(const AugmentedMesh& mesh, const ClothParams& params, const Vec3& action,
                            int grasped_vertex) {
  params.validate();
  const int n = static_cast<int>(mesh.vertex_count());
  if (grasped_vertex < 0 || grasped_vertex >= n)
    throw std::out_of_range("grasped vertex out of range: " + std::to_string(grasped_vertex));
  const MeshTopology& topo = mesh.topology();
  std::vector<Vec3> x = mesh.vertices();
  std::vector<Vec3> v = mesh.velocities();
  std::vector<Vec3> f(static_cast<std::size_t>(n));
  const double h = params.dt / params.substeps;
  const double inv_m = 1.0 / params.mass_per_vertex;
  const double friction_dv = params.ground_friction * params.gravity * h;

  for (int s = 0; s < params.substeps; ++s) {
    for (auto& fi : f) fi = Vec3(0, 0, -params.gravity * params.mass_per_vertex);
    for (std::size_t e = 0; e < topo.edges.size(); ++e)
      accumulate_spring(x, topo.edges[e][0], topo.edges[e][1], topo.rest_edge_lengths[e],
                        params.stretch_stiffness, f);
    for (std::size_t b = 0; b < topo.bending_pairs.size(); ++b)
      accumulate_spring(x, topo.bending_pairs[b][0], topo.bending_pairs[b][1], topo.rest_bending_lengths[b],
                        params.bending_stiffness, f);

    for (int i = 0; i < n; ++i) {
      auto ui = static_cast<std::size_t>(i);
      if (i == grasped_vertex) {
        v[ui] = action;
        x[ui] += h * action;
        continue;
      }
      f[ui] -= params.damping * v[ui];
      v[ui] += (h * inv_m) * f[ui];
      x[ui] += h * v[ui];
      if (x[ui].z() < 0.0) {
        x[ui].z() = 0.0;
        if (v[ui].z() < 0.0) v[ui].z() = 0.0;
        double vt = std::hypot(v[ui].x(), v[ui].y());
        if (vt > 0.0) {
          double scale = std::max(0.0, vt - friction_dv) / vt;
          v[ui].x() *= scale;
          v[ui].y() *= scale;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      auto ui = static_cast<std::size_t>(i);
      if (!x[ui].allFinite() || !v[ui].allFinite())
        throw std::runtime_error("simulation diverged at substep " + std::to_string(s) + " (vertex " +
                                 std::to_string(i) + ")");
    }
  }
  return mesh.with_state(std::move(x), std::move(v));
}

double cloth_energy(const AugmentedMesh& mesh, const ClothParams& params) {
  const MeshTopology& topo = mesh.topology();
  const auto& x = mesh.vertices();
  double e = 0;
  for (const auto& v : mesh.velocities()) e += 0.5 * params.mass_per_vertex * v.squaredNorm();
  for (std::size_t i = 0; i < topo.edges.size(); ++i) {
    double s = (x[static_cast<std::size_t>(topo.edges[i][0])] - x[static_cast<std::size_t>(topo.edges[i][1])]).norm() -
               topo.rest_edge_lengths[i];
    e += 0.5 * params.stretch_stiffness * s * s;
  }
  for (std::size_t i = 0; i < topo.bending_pairs.size(); ++i) {
    double s = (x[static_cast<std::size_t>(topo.bending_pairs[i][0])] -
                x[static_cast<std::size_t>(topo.bending_pairs[i][1])]).norm() -
               topo.rest_bending_lengths[i];
    e += 0.5 * params.bending_stiffness * s * s;
  }
  return e;
}

Vec3 bezier_point(const Vec3& p0, const Vec3& p1, const Vec3& p2, double u) {
  double w = 1.0 - u;
  return w * w * p0 + 2.0 * w * u * p1 + u * u * p2;
}

ActionTrajectory make_bezier_trajectory(const AugmentedMesh& mesh, std::uint64_t rng_seed, int steps,
                                        double gripper_speed) {
  if (mesh.vertex_count() < 1) throw std::invalid_argument("empty mesh");
  if (steps < 1) throw std::invalid_argument("trajectory needs at least one step");
  std::mt19937_64 rng(splitmix64(rng_seed));
  std::uniform_int_distribution<int> pick_dist(0, static_cast<int>(mesh.vertex_count()) - 1);

  ActionTrajectory traj;
  traj.pick_vertex = pick_dist(rng);
  Vec3 pick = mesh.vertices()[static_cast<std::size_t>(traj.pick_vertex)];

  Vec3 lo = mesh.vertices()[0], hi = mesh.vertices()[0];
  for (const auto& p : mesh.vertices()) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  double diag = (hi - lo).norm();
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec3 cand = mesh.vertices()[static_cast<std::size_t>(pick_dist(rng))];
    traj.place_point = cand;
    if ((cand - pick).norm() >= 0.4 * diag) break;
  }

  std::uniform_real_distribution<double> height_dist(0.05, 0.15);
  std::uniform_real_distribution<double> tilt_dist(-M_PI / 4, M_PI / 4);
  double height = height_dist(rng);
  double tilt = tilt_dist(rng);
  Vec3 mid = 0.5 * (pick + traj.place_point);
  Vec3 axis = traj.place_point - pick;
  Vec3 lift = Vec3(0, 0, height);
  if (axis.norm() > 1e-9) {
    Eigen::AngleAxisd rot(tilt, axis.normalized());
    lift = rot * lift;
  }
  traj.control_point = mid + lift;

  if (gripper_speed <= 0) {
    std::uniform_real_distribution<double> speed_dist(0.005, 0.02);
    gripper_speed = speed_dist(rng);
  }
  traj.gripper_speed = gripper_speed;

  // arc-length table for near-uniform speed along the curve
  const int kSamples = 2048;
  std::vector<double> arc(kSamples + 1, 0.0);
  Vec3 prev = pick;
  for (int i = 1; i <= kSamples; ++i) {
    Vec3 p = bezier_point(pick, traj.control_point, traj.place_point, static_cast<double>(i) / kSamples);
    arc[static_cast<std::size_t>(i)] = arc[static_cast<std::size_t>(i - 1)] + (p - prev).norm();
    prev = p;
  }
  double total = std::max(arc.back(), 1e-9);
  traj.dt = total / (gripper_speed * steps);

  auto point_at_arc = [&](double s) {
    auto it = std::lower_bound(arc.begin(), arc.end(), s);
    std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(it - arc.begin()), kSamples);
    if (k == 0) k = 1;
    double s0 = arc[k - 1], s1 = arc[k];
    double frac = s1 > s0 ? (s - s0) / (s1 - s0) : 0.0;
    double u = (static_cast<double>(k - 1) + frac) / kSamples;
    return bezier_point(pick, traj.control_point, traj.place_point, u);
  };

  traj.actions.resize(static_cast<std::size_t>(steps));
  Vec3 prev_pt = pick;
  for (int i = 1; i <= steps; ++i) {
    Vec3 pt = (i == steps) ? traj.place_point : point_at_arc(total * i / steps);
    traj.actions[static_cast<std::size_t>(i - 1)] = (pt - prev_pt) / traj.dt;
    prev_pt = pt;
  }
  return traj;
}

ClothTemplate cloth_template_from_string(const std::string& s) {
  if (s == "towel" || s == "TOWEL") return ClothTemplate::TOWEL;
  if (s == "shorts" || s == "SHORTS") return ClothTemplate::SHORTS;
  if (s == "tshirt" || s == "TSHIRT") return ClothTemplate::TSHIRT;
  throw std::invalid_argument("unknown cloth template: " + s);
}

std::string to_string(ClothTemplate t) {
  switch (t) {
    case ClothTemplate::TOWEL: return "towel";
    case ClothTemplate::SHORTS: return "shorts";
    case ClothTemplate::TSHIRT: return "tshirt";
  }
  return "?";
}

namespace {

bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& p) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    bool crosses = (poly[i].y() > p.y()) != (poly[j].y() > p.y());
    if (crosses) {
      double x = poly[j].x() + (p.y() - poly[j].y()) / (poly[i].y() - poly[j].y()) * (poly[i].x() - poly[j].x());
      if (p.x() < x) inside = !inside;
    }
  }
  return inside;
}

AugmentedMesh polygon_mesh(const std::vector<Eigen::Vector2d>& outline, double spacing) {
  Eigen::Vector2d lo = outline[0], hi = outline[0];
  for (const auto& p : outline) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  std::vector<Vec3> pts;
  for (const auto& p : outline) pts.emplace_back(p.x(), p.y(), 0.0);
  // boundary resampling
  for (std::size_t i = 0; i < outline.size(); ++i) {
    Eigen::Vector2d a = outline[i], b = outline[(i + 1) % outline.size()];
    int segs = std::max(1, static_cast<int>(std::floor((b - a).norm() / spacing)));
    for (int k = 1; k < segs; ++k) {
      Eigen::Vector2d p = a + (b - a) * (static_cast<double>(k) / segs);
      pts.emplace_back(p.x(), p.y(), 0.0);
    }
  }
  // interior grid
  for (double y = lo.y() + spacing; y < hi.y() - 0.25 * spacing; y += spacing) {
    for (double x = lo.x() + spacing; x < hi.x() - 0.25 * spacing; x += spacing) {
      Eigen::Vector2d p(x, y);
      bool clear = point_in_polygon(outline, p);
      if (!clear) continue;
      for (const auto& q : pts)
        if ((Eigen::Vector2d(q.x(), q.y()) - p).norm() < 0.4 * spacing) {
          clear = false;
          break;
        }
      if (clear) pts.emplace_back(x, y, 0.0);
    }
  }
  AugmentedMesh full = delaunay_mesh_from_points(pts);
  // drop convex-hull fill outside the outline
  std::vector<std::array<int, 3>> faces;
  for (std::size_t fi = 0; fi < full.face_count(); ++fi) {
    auto tri = full.face_vertices(static_cast<int>(fi));
    Eigen::Vector2d c((tri[0].x() + tri[1].x() + tri[2].x()) / 3.0, (tri[0].y() + tri[1].y() + tri[2].y()) / 3.0);
    if (point_in_polygon(outline, c)) faces.push_back(full.topology().faces[fi]);
  }
  return AugmentedMesh(pts, faces);
}

}  // namespace

AugmentedMesh make_template_mesh(ClothTemplate t, double width, double height, int resolution) {
  if (t == ClothTemplate::TOWEL) {
    if (resolution < 2) throw std::invalid_argument("towel resolution must be >= 2");
    std::vector<Vec3> pts;
    for (int iy = 0; iy < resolution; ++iy)
      for (int ix = 0; ix < resolution; ++ix)
        pts.emplace_back(width * ix / (resolution - 1), height * iy / (resolution - 1), 0.0);
    std::vector<std::array<int, 3>> faces;
    auto id = [&](int ix, int iy) { return iy * resolution + ix; };
    for (int iy = 0; iy + 1 < resolution; ++iy) {
      for (int ix = 0; ix + 1 < resolution; ++ix) {
        int a = id(ix, iy), b = id(ix + 1, iy), c = id(ix, iy + 1), d = id(ix + 1, iy + 1);
        if ((ix + iy) % 2 == 0) {
          faces.push_back({a, b, d});
          faces.push_back({a, d, c});
        } else {
          faces.push_back({a, b, c});
          faces.push_back({b, d, c});
        }
      }
    }
    return AugmentedMesh(pts, faces);
  }

  double spacing = std::max(width, height) / std::max(3, resolution - 1);
  if (t == ClothTemplate::SHORTS) {
    // waist at the top, two legs below
    double w = width, h = height;
    std::vector<Eigen::Vector2d> outline = {
        {0, h},        {w, h},          {w, 0},        {0.62 * w, 0},
        {0.55 * w, 0.45 * h}, {0.45 * w, 0.45 * h}, {0.38 * w, 0}, {0, 0}};
    std::reverse(outline.begin(), outline.end());
    return polygon_mesh(outline, spacing);
  }
  // TSHIRT: torso with two stub sleeves
  double w = width, h = height;
  std::vector<Eigen::Vector2d> outline = {
      {0.25 * w, 0},      {0.75 * w, 0},      {0.75 * w, 0.55 * h}, {w, 0.55 * h},
      {w, 0.8 * h},       {0.75 * w, 0.8 * h}, {0.75 * w, h},       {0.25 * w, h},
      {0.25 * w, 0.8 * h}, {0, 0.8 * h},       {0, 0.55 * h},       {0.25 * w, 0.55 * h}};
  return polygon_mesh(outline, spacing);
}

}  // namespace ct
