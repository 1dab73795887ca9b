#include "ct/splat.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ct/parallel.hpp"
#include "ct/rng.hpp"

namespace ct {

namespace {
constexpr double kNearPlane = 1e-3;
constexpr double kCovFloor = 0.3;        // px^2 diagonal regularizer
constexpr double kMinTransmittance = 1e-6;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Mat3 quat_to_rot(const Eigen::Vector4d& q) {
  double w = q(0), x = q(1), y = q(2), z = q(3);
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

// shared by the production and reference rasterizers so both round the same
inline double eval_alpha(const ProjectedGaussian& pg, double opacity, double px, double py) {
  double dx = px - pg.mean_x;
  double dy = py - pg.mean_y;
  double q = pg.inv_a * dx * dx + 2.0 * pg.inv_b * dx * dy + pg.inv_c * dy * dy;
  return opacity * std::exp(-0.5 * q);
}

}  // namespace

void GaussianCloud::validate(const AugmentedMesh& mesh) const {
  std::size_t n = size();
  if (bc.size() != n || rotation.size() != n || log_scales.size() != n || opacity_logit.size() != n ||
      color.size() != n)
    throw std::invalid_argument("inconsistent gaussian cloud arrays");
  for (std::size_t i = 0; i < n; ++i) {
    if (face_id[i] < 0 || face_id[i] >= static_cast<int>(mesh.face_count()))
      throw std::out_of_range("gaussian " + std::to_string(i) + " references invalid face " +
                              std::to_string(face_id[i]));
  }
}

void GaussianCloud::remove(const std::vector<std::uint8_t>& keep) {
  if (keep.size() != size()) throw std::invalid_argument("keep mask size mismatch");
  std::size_t w = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    face_id[w] = face_id[i];
    bc[w] = bc[i];
    rotation[w] = rotation[i];
    log_scales[w] = log_scales[i];
    opacity_logit[w] = opacity_logit[i];
    color[w] = color[i];
    ++w;
  }
  face_id.resize(w);
  bc.resize(w);
  rotation.resize(w);
  log_scales.resize(w);
  opacity_logit.resize(w);
  color.resize(w);
}

GaussianCloud attach_gaussians(const AugmentedMesh& mesh, int per_face, std::uint64_t rng_seed) {
  if (mesh.face_count() == 0) throw std::invalid_argument("mesh has no faces");
  if (per_face < 1) throw std::invalid_argument("per_face must be >= 1");
  std::mt19937_64 rng(splitmix64(rng_seed));
  std::normal_distribution<double> bc_dist(1.0 / 3.0, 0.05);

  double mean_edge = 0;
  for (double l : mesh.topology().rest_edge_lengths) mean_edge += l;
  mean_edge /= static_cast<double>(mesh.topology().rest_edge_lengths.size());
  double tangent_scale = std::clamp(std::log(mean_edge / 3.0), kLogScaleMin, kLogScaleMax);
  double normal_scale = std::clamp(std::log(1e-3), kLogScaleMin, kLogScaleMax);

  GaussianCloud cloud;
  std::size_t total = mesh.face_count() * static_cast<std::size_t>(per_face);
  cloud.face_id.reserve(total);
  for (int f = 0; f < static_cast<int>(mesh.face_count()); ++f) {
    for (int k = 0; k < per_face; ++k) {
      BarycentricCoord bc{bc_dist(rng), bc_dist(rng), bc_dist(rng)};
      bc.normalize();
      cloud.face_id.push_back(f);
      cloud.bc.push_back(bc);
      cloud.rotation.push_back(Eigen::Vector4d(1, 0, 0, 0));
      cloud.log_scales.push_back(Vec3(tangent_scale, tangent_scale, normal_scale));
      cloud.opacity_logit.push_back(2.0);
      cloud.color.push_back(Vec3(0.5, 0.5, 0.5));
    }
  }
  return cloud;
}

std::vector<WorldGaussian> world_gaussians(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                                           const AugmentedMesh& rest_mesh) {
  cloud.validate(mesh);
  if (mesh.face_count() != rest_mesh.face_count())
    throw std::invalid_argument("deformed/rest mesh topology mismatch");

  std::vector<Mat3> frames(mesh.face_count());
  std::vector<std::uint8_t> needed(mesh.face_count(), 0);
  for (int f : cloud.face_id) needed[static_cast<std::size_t>(f)] = 1;
  for (std::size_t f = 0; f < mesh.face_count(); ++f) {
    if (!needed[f]) continue;
    try {
      frames[f] = face_rotation(rest_mesh.face_vertices(static_cast<int>(f)),
                                mesh.face_vertices(static_cast<int>(f))).rotation;
    } catch (const std::exception& e) {
      throw std::runtime_error("face " + std::to_string(f) + ": " + e.what());
    }
  }

  std::vector<WorldGaussian> out(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    WorldGaussian& g = out[i];
    g.face_frame = frames[static_cast<std::size_t>(cloud.face_id[i])];
    Eigen::Vector4d q = cloud.rotation[i].normalized();
    g.rot = g.face_frame * quat_to_rot(q);
    g.mu = barycentric_to_world(mesh, cloud.face_id[i], cloud.bc[i]);
    Vec3 d2 = (2.0 * cloud.log_scales[i]).array().exp().matrix();
    g.cov = g.rot * d2.asDiagonal() * g.rot.transpose();
  }
  return out;
}

ProjectedGaussian project_gaussian(const Vec3& mu, const Mat3& cov, const CameraView& cam) {
  ProjectedGaussian pg;
  Vec3 xc = cam.to_camera(mu);
  if (!(xc.z() > kNearPlane)) return pg;  // culled
  pg.culled = false;
  pg.depth = xc.z();
  double invz = 1.0 / xc.z();
  pg.mean_x = cam.fx * xc.x() * invz + cam.cx;
  pg.mean_y = cam.fy * xc.y() * invz + cam.cy;

  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * invz, 0, -cam.fx * xc.x() * invz * invz,
       0, cam.fy * invz, -cam.fy * xc.y() * invz * invz;
  Mat3 w = cam.rotation();
  Eigen::Matrix2d c2 = j * w * cov * w.transpose() * j.transpose();
  pg.cov_a = c2(0, 0) + kCovFloor;
  pg.cov_b = c2(0, 1);
  pg.cov_c = c2(1, 1) + kCovFloor;

  double det = pg.cov_a * pg.cov_c - pg.cov_b * pg.cov_b;
  pg.inv_a = pg.cov_c / det;
  pg.inv_b = -pg.cov_b / det;
  pg.inv_c = pg.cov_a / det;

  double rx = 3.0 * std::sqrt(pg.cov_a);
  double ry = 3.0 * std::sqrt(pg.cov_c);
  pg.x0 = std::max(0, static_cast<int>(std::floor(pg.mean_x - rx + 0.5)));
  pg.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(pg.mean_x + rx - 0.5)));
  pg.y0 = std::max(0, static_cast<int>(std::floor(pg.mean_y - ry + 0.5)));
  pg.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(pg.mean_y + ry - 0.5)));
  if (pg.x0 > pg.x1 || pg.y0 > pg.y1) pg.culled = true;  // off-screen
  return pg;
}

namespace {

struct ProjectedScene {
  std::vector<WorldGaussian> world;
  std::vector<ProjectedGaussian> proj;
  std::vector<int> sorted;
};

ProjectedScene project_scene(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                             const AugmentedMesh& rest_mesh, const CameraView& cam) {
  cam.validate();
  ProjectedScene s;
  s.world = world_gaussians(cloud, mesh, rest_mesh);
  s.proj.resize(s.world.size());
  for (std::size_t i = 0; i < s.world.size(); ++i)
    s.proj[i] = project_gaussian(s.world[i].mu, s.world[i].cov, cam);
  for (std::size_t i = 0; i < s.proj.size(); ++i)
    if (!s.proj[i].culled) s.sorted.push_back(static_cast<int>(i));
  std::sort(s.sorted.begin(), s.sorted.end(), [&](int a, int b) {
    double da = s.proj[static_cast<std::size_t>(a)].depth, db = s.proj[static_cast<std::size_t>(b)].depth;
    return da != db ? da < db : a < b;
  });
  return s;
}

}  // namespace

RenderOutput render_view(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                         const AugmentedMesh& rest_mesh, const CameraView& cam, bool parallel) {
  ProjectedScene scene = project_scene(cloud, mesh, rest_mesh, cam);
  const int w = cam.width, h = cam.height;

  RenderOutput out;
  out.rgb = Image(w, h);
  out.accum_opacity.assign(static_cast<std::size_t>(w) * h, 0.0);
  out.cloud_size = static_cast<int>(cloud.size());

  std::vector<std::vector<int>> row_contribs(static_cast<std::size_t>(h));
  std::vector<std::vector<int>> row_counts(static_cast<std::size_t>(h));

  chunked_for(static_cast<std::size_t>(h), static_cast<std::size_t>(h), parallel,
              [&](std::size_t, std::size_t rb, std::size_t re) {
    for (std::size_t row = rb; row < re; ++row) {
      int y = static_cast<int>(row);
      std::vector<int> candidates;
      for (int gi : scene.sorted) {
        const auto& pg = scene.proj[static_cast<std::size_t>(gi)];
        if (y >= pg.y0 && y <= pg.y1) candidates.push_back(gi);
      }
      auto& contribs = row_contribs[row];
      auto& counts = row_counts[row];
      counts.assign(static_cast<std::size_t>(w), 0);
      double py = y + 0.5;
      for (int x = 0; x < w; ++x) {
        double px = x + 0.5;
        double t = 1.0;
        Vec3 c = Vec3::Zero();
        int n_contrib = 0;
        for (int gi : candidates) {
          const auto& pg = scene.proj[static_cast<std::size_t>(gi)];
          if (x < pg.x0 || x > pg.x1) continue;
          double a = eval_alpha(pg, sigmoid(cloud.opacity_logit[static_cast<std::size_t>(gi)]), px, py);
          c += (a * t) * cloud.color[static_cast<std::size_t>(gi)];
          t *= 1.0 - a;
          contribs.push_back(gi);
          ++n_contrib;
          if (t < kMinTransmittance) break;
        }
        counts[static_cast<std::size_t>(x)] = n_contrib;
        double* dst = out.rgb.at(x, y);
        dst[0] = c.x();
        dst[1] = c.y();
        dst[2] = c.z();
        out.accum_opacity[row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)] = 1.0 - t;
      }
    }
  });

  // stitch per-row lists into CSR, row order
  out.contrib_offsets.assign(static_cast<std::size_t>(w) * h + 1, 0);
  std::size_t total = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      out.contrib_offsets[static_cast<std::size_t>(y) * w + x] = static_cast<int>(total);
      total += static_cast<std::size_t>(row_counts[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)]);
    }
  out.contrib_offsets.back() = static_cast<int>(total);
  out.contrib_ids.reserve(total);
  for (int y = 0; y < h; ++y)
    out.contrib_ids.insert(out.contrib_ids.end(), row_contribs[static_cast<std::size_t>(y)].begin(),
                           row_contribs[static_cast<std::size_t>(y)].end());

  out.world = std::move(scene.world);
  out.proj = std::move(scene.proj);
  out.sorted = std::move(scene.sorted);
  return out;
}

Image render_view_reference(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                            const AugmentedMesh& rest_mesh, const CameraView& cam) {
  ProjectedScene scene = project_scene(cloud, mesh, rest_mesh, cam);
  Image img(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      double t = 1.0;
      Vec3 c = Vec3::Zero();
      for (int gi : scene.sorted) {
        const auto& pg = scene.proj[static_cast<std::size_t>(gi)];
        if (x < pg.x0 || x > pg.x1 || y < pg.y0 || y > pg.y1) continue;
        double a = eval_alpha(pg, sigmoid(cloud.opacity_logit[static_cast<std::size_t>(gi)]), x + 0.5, y + 0.5);
        c += (a * t) * cloud.color[static_cast<std::size_t>(gi)];
        t *= 1.0 - a;
        if (t < kMinTransmittance) break;
      }
      double* dst = img.at(x, y);
      dst[0] = c.x();
      dst[1] = c.y();
      dst[2] = c.z();
    }
  }
  return img;
}

void RenderGrads::resize(std::size_t n_vertices, std::size_t n_gaussians) {
  d_vertices.assign(n_vertices, Vec3::Zero());
  d_color.assign(n_gaussians, Vec3::Zero());
  d_opacity_logit.assign(n_gaussians, 0.0);
  d_log_scales.assign(n_gaussians, Vec3::Zero());
  d_rotation.assign(n_gaussians, Eigen::Vector4d::Zero());
  d_bc.assign(n_gaussians, Vec3::Zero());
}

void RenderGrads::add(const RenderGrads& other) {
  if (other.d_vertices.empty() && other.d_color.empty()) return;  // untouched chunk
  if (other.d_vertices.size() != d_vertices.size() || other.d_color.size() != d_color.size())
    throw std::invalid_argument("gradient accumulator size mismatch");
  for (std::size_t i = 0; i < d_vertices.size(); ++i) d_vertices[i] += other.d_vertices[i];
  for (std::size_t i = 0; i < d_color.size(); ++i) {
    d_color[i] += other.d_color[i];
    d_opacity_logit[i] += other.d_opacity_logit[i];
    d_log_scales[i] += other.d_log_scales[i];
    d_rotation[i] += other.d_rotation[i];
    d_bc[i] += other.d_bc[i];
  }
}

namespace {

// Closed-form adjoint of the single-triangle Procrustes solve: given
// G = dL/dR for the face frame R(V), accumulates dL/dV onto the deformed
// vertices. Solves (tr(S) I - S) phi = vee(G R^T - (G R^T)^T) with S = R M.
void face_rotation_backward(const std::array<Vec3, 3>& rest, const std::array<Vec3, 3>& deformed,
                            const Mat3& r, const Mat3& g, std::array<Vec3, 3>& d_vertices) {
  Vec3 rc = (rest[0] + rest[1] + rest[2]) / 3.0;
  Vec3 dc = (deformed[0] + deformed[1] + deformed[2]) / 3.0;
  Mat3 m = Mat3::Zero();
  for (int i = 0; i < 3; ++i) m += (rest[static_cast<std::size_t>(i)] - rc) *
                                   (deformed[static_cast<std::size_t>(i)] - dc).transpose();
  Mat3 s = r * m;
  Mat3 c = s.trace() * Mat3::Identity() - s;
  Mat3 a = g * r.transpose();
  Vec3 g_phi(a(2, 1) - a(1, 2), a(0, 2) - a(2, 0), a(1, 0) - a(0, 1));
  Vec3 g_r = c.ldlt().solve(g_phi);
  Mat3 p;
  p << 0, g_r(2), -g_r(1), -g_r(2), 0, g_r(0), g_r(1), -g_r(0), 0;
  Mat3 dm = r.transpose() * p;
  Vec3 mean_db = Vec3::Zero();
  std::array<Vec3, 3> db;
  for (int i = 0; i < 3; ++i) {
    db[static_cast<std::size_t>(i)] = dm.transpose() * (rest[static_cast<std::size_t>(i)] - rc);
    mean_db += db[static_cast<std::size_t>(i)] / 3.0;
  }
  for (int i = 0; i < 3; ++i) d_vertices[static_cast<std::size_t>(i)] += db[static_cast<std::size_t>(i)] - mean_db;
}

}  // namespace

RenderGrads render_backward(const RenderOutput& out, const GaussianCloud& cloud,
                            const AugmentedMesh& mesh, const AugmentedMesh& rest_mesh,
                            const CameraView& cam, const Image& pixel_grad, bool parallel) {
  const int w = cam.width, h = cam.height;
  if (pixel_grad.width != w || pixel_grad.height != h)
    throw std::invalid_argument("pixel_grad does not match camera dimensions");
  if (out.cloud_size != static_cast<int>(cloud.size()) || out.rgb.width != w || out.rgb.height != h)
    throw std::invalid_argument("render output does not match backward inputs");
  const std::size_t n_gauss = cloud.size();

  // phase 1: per-pixel blend gradients -> per-Gaussian (color, logit, mean2d, cov2d)
  // accumulated in fixed-size row chunks and reduced in row order
  constexpr int kPerG = 9;  // dcolor(3) dlogit(1) dmean(2) dcov(3)
  std::vector<std::vector<double>> chunk_buf(static_cast<std::size_t>(h));

  chunked_for(static_cast<std::size_t>(h), static_cast<std::size_t>(h), parallel,
              [&](std::size_t, std::size_t rb, std::size_t re) {
    std::vector<std::pair<double, double>> stack;  // (alpha, transmittance before)
    for (std::size_t row = rb; row < re; ++row) {
      auto& buf = chunk_buf[row];
      buf.assign(n_gauss * kPerG, 0.0);
      int y = static_cast<int>(row);
      double py = y + 0.5;
      for (int x = 0; x < w; ++x) {
        std::size_t pix = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
        const double* g = pixel_grad.at(x, y);
        if (g[0] == 0 && g[1] == 0 && g[2] == 0) continue;
        Vec3 gv(g[0], g[1], g[2]);
        int begin = out.contrib_offsets[pix], end = out.contrib_offsets[pix + 1];
        if (begin == end) continue;
        double px = x + 0.5;

        stack.clear();
        double t = 1.0;
        for (int k = begin; k < end; ++k) {
          int gi = out.contrib_ids[static_cast<std::size_t>(k)];
          const auto& pg = out.proj[static_cast<std::size_t>(gi)];
          double a = eval_alpha(pg, sigmoid(cloud.opacity_logit[static_cast<std::size_t>(gi)]), px, py);
          stack.emplace_back(a, t);
          t *= 1.0 - a;
        }
        // reverse sweep with the suffix of downstream color
        Vec3 suffix = Vec3::Zero();
        for (int k = end - 1; k >= begin; --k) {
          int gi = out.contrib_ids[static_cast<std::size_t>(k)];
          const auto& pg = out.proj[static_cast<std::size_t>(gi)];
          auto [a, t_before] = stack[static_cast<std::size_t>(k - begin)];
          const Vec3& col = cloud.color[static_cast<std::size_t>(gi)];
          double o = sigmoid(cloud.opacity_logit[static_cast<std::size_t>(gi)]);

          double* acc = buf.data() + static_cast<std::size_t>(gi) * kPerG;
          double wgt = a * t_before;
          acc[0] += gv.x() * wgt;
          acc[1] += gv.y() * wgt;
          acc[2] += gv.z() * wgt;

          double d_alpha = t_before * gv.dot(col) - gv.dot(suffix) / (1.0 - a);
          acc[3] += d_alpha * a * (1.0 - o);  // d opacity_logit
          double dq = -0.5 * a * d_alpha;     // d (d^T Sigma'^-1 d)

          double dx = px - pg.mean_x, dy = py - pg.mean_y;
          double adx = pg.inv_a * dx + pg.inv_b * dy;  // A d
          double ady = pg.inv_b * dx + pg.inv_c * dy;
          acc[4] += -2.0 * dq * adx;  // d mean2d
          acc[5] += -2.0 * dq * ady;
          acc[6] += -dq * adx * adx;  // d cov2d (full-matrix convention)
          acc[7] += -dq * adx * ady;
          acc[8] += -dq * ady * ady;

          suffix += (a * t_before) * col;
        }
      }
    }
  });

  std::vector<double> acc(n_gauss * kPerG, 0.0);
  for (std::size_t row = 0; row < static_cast<std::size_t>(h); ++row) {
    const auto& buf = chunk_buf[row];
    if (buf.empty()) continue;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += buf[i];
  }
  chunk_buf.clear();

  // phase 2: per-Gaussian chain through projection, covariance assembly and
  // barycentric means
  RenderGrads grads;
  grads.resize(mesh.vertex_count(), n_gauss);
  const Mat3 wrot = cam.rotation();

  std::size_t n_chunks = 16;
  std::vector<RenderGrads> chunk_grads(n_chunks);
  std::vector<std::vector<Mat3>> chunk_frame_grads(n_chunks);  // dL/dR_face per face
  chunked_for(out.sorted.size(), n_chunks, parallel, [&](std::size_t ci, std::size_t b, std::size_t e) {
    RenderGrads& cg = chunk_grads[ci];
    cg.resize(mesh.vertex_count(), n_gauss);
    chunk_frame_grads[ci].assign(mesh.face_count(), Mat3::Zero());
    for (std::size_t si = b; si < e; ++si) {
      std::size_t gi = static_cast<std::size_t>(out.sorted[si]);
      const double* a = acc.data() + gi * kPerG;
      cg.d_color[gi] = Vec3(a[0], a[1], a[2]);
      cg.d_opacity_logit[gi] = a[3];

      Eigen::Vector2d d_mean2d(a[4], a[5]);
      Eigen::Matrix2d d_cov2d;
      d_cov2d << a[6], a[7], a[7], a[8];
      if (d_mean2d.isZero(0) && d_cov2d.isZero(0)) continue;

      const WorldGaussian& wg = out.world[gi];
      Vec3 xc = cam.to_camera(wg.mu);
      double invz = 1.0 / xc.z();
      Eigen::Matrix<double, 2, 3> j;
      j << cam.fx * invz, 0, -cam.fx * xc.x() * invz * invz,
           0, cam.fy * invz, -cam.fy * xc.y() * invz * invz;

      // mean path
      Vec3 d_xc = j.transpose() * d_mean2d;

      // covariance path
      Mat3 m_cam = wrot * wg.cov * wrot.transpose();
      Eigen::Matrix<double, 2, 3> u = j * wrot;
      Mat3 d_cov_world = u.transpose() * d_cov2d * u;
      Eigen::Matrix<double, 2, 3> d_j = 2.0 * d_cov2d * j * m_cam;
      double z2 = invz * invz, z3 = z2 * invz;
      d_xc.x() += d_j(0, 2) * (-cam.fx * z2);
      d_xc.y() += d_j(1, 2) * (-cam.fy * z2);
      d_xc.z() += d_j(0, 0) * (-cam.fx * z2) + d_j(0, 2) * (2 * cam.fx * xc.x() * z3) +
                  d_j(1, 1) * (-cam.fy * z2) + d_j(1, 2) * (2 * cam.fy * xc.y() * z3);

      Vec3 d_mu = wrot.transpose() * d_xc;

      // barycentric mean: mu = b1 v1 + b2 v2 + b3 v3
      auto tri = mesh.face_vertices(cloud.face_id[gi]);
      const auto& f = mesh.topology().faces[static_cast<std::size_t>(cloud.face_id[gi])];
      for (int k = 0; k < 3; ++k) {
        cg.d_bc[gi][k] = tri[static_cast<std::size_t>(k)].dot(d_mu);
        cg.d_vertices[static_cast<std::size_t>(f[static_cast<std::size_t>(k)])] +=
            cloud.bc[gi][k] * d_mu;
      }

      // scales and local rotation: cov = R diag(e^{2s}) R^T, R = R_face R'(q)
      Vec3 d2 = (2.0 * cloud.log_scales[gi]).array().exp().matrix();
      Mat3 d_r = 2.0 * d_cov_world * wg.rot * d2.asDiagonal();
      Mat3 rtdr = wg.rot.transpose() * d_cov_world * wg.rot;
      for (int k = 0; k < 3; ++k) cg.d_log_scales[gi][k] = rtdr(k, k) * 2.0 * d2(k);

      // face-frame path: R = R_face R' so dL/dR_face = dL/dR R'^T
      Mat3 r_local = wg.face_frame.transpose() * wg.rot;
      chunk_frame_grads[ci][static_cast<std::size_t>(cloud.face_id[gi])] += d_r * r_local.transpose();

      Mat3 d_rloc = wg.face_frame.transpose() * d_r;
      Eigen::Vector4d qn = cloud.rotation[gi].normalized();
      double qw = qn(0), qx = qn(1), qy = qn(2), qz = qn(3);
      Mat3 dw, dx_, dy_, dz_;
      dw << 0, -qz, qy, qz, 0, -qx, -qy, qx, 0;
      dx_ << 0, qy, qz, qy, -2 * qx, -qw, qz, qw, -2 * qx;
      dy_ << -2 * qy, qx, qw, qx, 0, qz, -qw, qz, -2 * qy;
      dz_ << -2 * qz, -qw, qx, qw, -2 * qz, qy, qx, qy, 0;
      Eigen::Vector4d d_qn(2.0 * (d_rloc.array() * dw.array()).sum(),
                           2.0 * (d_rloc.array() * dx_.array()).sum(),
                           2.0 * (d_rloc.array() * dy_.array()).sum(),
                           2.0 * (d_rloc.array() * dz_.array()).sum());
      // through normalization q -> q/|q|
      double norm = cloud.rotation[gi].norm();
      cg.d_rotation[gi] = (d_qn - qn * qn.dot(d_qn)) / norm;
    }
  });
  for (const auto& cg : chunk_grads) grads.add(cg);

  // vertex gradients through the face frames (Procrustes adjoint)
  std::vector<Mat3> frame_grads(mesh.face_count(), Mat3::Zero());
  std::vector<Mat3> frames(mesh.face_count(), Mat3::Identity());
  std::vector<std::uint8_t> frame_used(mesh.face_count(), 0);
  for (std::size_t gi = 0; gi < n_gauss; ++gi) {
    frames[static_cast<std::size_t>(cloud.face_id[gi])] = out.world[gi].face_frame;
    frame_used[static_cast<std::size_t>(cloud.face_id[gi])] = 1;
  }
  for (const auto& cfg : chunk_frame_grads) {
    if (cfg.empty()) continue;
    for (std::size_t f = 0; f < frame_grads.size(); ++f) frame_grads[f] += cfg[f];
  }
  for (std::size_t f = 0; f < frame_grads.size(); ++f) {
    if (!frame_used[f] || frame_grads[f].isZero(0)) continue;
    std::array<Vec3, 3> dv = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};
    face_rotation_backward(rest_mesh.face_vertices(static_cast<int>(f)),
                           mesh.face_vertices(static_cast<int>(f)), frames[f], frame_grads[f], dv);
    const auto& face = mesh.topology().faces[f];
    for (int k = 0; k < 3; ++k)
      grads.d_vertices[static_cast<std::size_t>(face[static_cast<std::size_t>(k)])] += dv[static_cast<std::size_t>(k)];
  }
  return grads;
}

void dump_gaussian_csv(const std::string& path, const GaussianCloud& cloud, const RenderOutput& out) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "gaussian,face_id,b1,b2,b3,depth,mean_x,mean_y,alpha_center\n";
  char line[320];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& pg = out.proj[i];
    double alpha_center = pg.culled ? 0.0 : sigmoid(cloud.opacity_logit[i]);
    std::snprintf(line, sizeof(line), "%zu,%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n", i, cloud.face_id[i],
                  cloud.bc[i].b1, cloud.bc[i].b2, cloud.bc[i].b3, pg.culled ? -1.0 : pg.depth,
                  pg.mean_x, pg.mean_y, alpha_center);
    f << line;
  }
}

}  // namespace ct
