#include <random>

#include "ct/scene.hpp"
#include "ct/splat.hpp"
#include "doctest.h"
#include "test_utils.hpp"

using namespace ct;

namespace {

CameraView test_camera(int wh = 16, double dist = 0.5) {
  return look_at_camera(Vec3(0.1, 0.1, dist), Vec3(0.1, 0.1, 0.0), 1.2 * wh, wh, wh);
}

// micro-scene: 2-triangle mesh with a handful of Gaussians; isotropic scales
// make the (stop-gradient) face-frame term vanish for vertex perturbations
struct MicroScene {
  AugmentedMesh rest;
  AugmentedMesh deformed;
  GaussianCloud cloud;
  CameraView cam;
};

MicroScene make_micro_scene(std::uint64_t seed, int n_gauss = 4, bool isotropic = true, int wh = 16) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::normal_distribution<double> g(0, 1);

  MicroScene s;
  s.rest = testing::two_triangle_mesh(0.2);
  std::vector<Vec3> x = s.rest.vertices();
  for (auto& p : x) p += 0.015 * Vec3(g(rng), g(rng), g(rng));
  s.deformed = s.rest.with_state(x, s.rest.velocities());
  s.cam = test_camera(wh);

  for (int i = 0; i < n_gauss; ++i) {
    s.cloud.face_id.push_back(i % 2);
    BarycentricCoord bc{0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng), 0.2 + 0.6 * u(rng)};
    bc.normalize();
    s.cloud.bc.push_back(bc);
    Eigen::Vector4d q(1.0 + 0.2 * g(rng), 0.2 * g(rng), 0.2 * g(rng), 0.2 * g(rng));
    s.cloud.rotation.push_back(q.normalized());
    double base = std::log(0.02 + 0.015 * u(rng));
    if (isotropic)
      s.cloud.log_scales.push_back(Vec3(base, base, base));
    else
      s.cloud.log_scales.push_back(Vec3(base, base - 0.4, base - 2.0));
    s.cloud.opacity_logit.push_back(-0.5 + 2.0 * u(rng));
    s.cloud.color.push_back(Vec3(u(rng), u(rng), u(rng)));
  }
  return s;
}

double render_objective(const MicroScene& s, const Image& pixel_grad) {
  RenderOutput out = render_view(s.cloud, s.deformed, s.rest, s.cam, false);
  double obj = 0;
  for (std::size_t i = 0; i < out.rgb.px.size(); ++i) obj += out.rgb.px[i] * pixel_grad.px[i];
  return obj;
}

struct FdStats {
  std::vector<double> rel_errors;
  double percentile(double q) const {
    std::vector<double> e = rel_errors;
    std::sort(e.begin(), e.end());
    if (e.empty()) return 0;
    std::size_t i = std::min(e.size() - 1, static_cast<std::size_t>(q * static_cast<double>(e.size())));
    return e[i];
  }
};

void accumulate_rel_error(FdStats& stats, double analytic, double fd, double scale_floor) {
  double denom = std::max({std::abs(analytic), std::abs(fd), scale_floor});
  stats.rel_errors.push_back(std::abs(analytic - fd) / denom);
}

}  // namespace

TEST_CASE("attach_gaussians counts, normalization, determinism") {
  AugmentedMesh m = make_template_mesh(ClothTemplate::TOWEL, 0.2, 0.2, 3);
  CHECK(m.face_count() == 8);
  GaussianCloud a = attach_gaussians(m, 2, 9);
  CHECK(a.size() == 16);
  for (const auto& bc : a.bc) CHECK(std::abs(bc.sum() - 1.0) < 1e-12);
  GaussianCloud b = attach_gaussians(m, 2, 9);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.bc[i].b1 == b.bc[i].b1);
  // raw N(1/3, 0.05) samples stay within 4 sigma essentially always
  for (const auto& bc : a.bc) {
    CHECK(bc.b1 > 1.0 / 3 - 0.4);
    CHECK(bc.b1 < 1.0 / 3 + 0.4);
  }
}

TEST_CASE("world_gaussians on the undeformed mesh uses the local rotation only") {
  MicroScene s = make_micro_scene(1, 4, false);
  auto world = world_gaussians(s.cloud, s.rest, s.rest);
  for (std::size_t i = 0; i < world.size(); ++i) {
    CHECK((world[i].face_frame - Mat3::Identity()).norm() < 1e-9);
    // eigenvalues of cov equal exp(2 s) up to ordering
    Eigen::SelfAdjointEigenSolver<Mat3> es(world[i].cov);
    Vec3 expected = (2.0 * s.cloud.log_scales[i]).array().exp().matrix();
    std::sort(expected.data(), expected.data() + 3);
    CHECK((es.eigenvalues() - expected).norm() < 1e-9 * expected.norm());
  }
}

TEST_CASE("world_gaussians equivariance under rigid rotation") {
  MicroScene s = make_micro_scene(2, 4, false);
  auto base = world_gaussians(s.cloud, s.deformed, s.rest);
  std::mt19937_64 rng(3);
  Mat3 q = testing::random_rotation(rng);
  std::vector<Vec3> x = s.deformed.vertices();
  for (auto& p : x) p = q * p;
  AugmentedMesh rotated = s.deformed.with_state(x, s.deformed.velocities());
  auto rot = world_gaussians(s.cloud, rotated, s.rest);
  for (std::size_t i = 0; i < base.size(); ++i) {
    CHECK((rot[i].mu - q * base[i].mu).norm() < 1e-6);
    CHECK((rot[i].cov - q * base[i].cov * q.transpose()).norm() < 1e-6);
  }
}

TEST_CASE("project_gaussian basics") {
  CameraView cam = look_at_camera(Vec3(0, 0, 0.5), Vec3(0, 0, 0), 20.0, 16, 16);
  SUBCASE("on-axis mean lands on the principal point") {
    ProjectedGaussian pg = project_gaussian(Vec3(0, 0, 0), 1e-6 * Mat3::Identity(), cam);
    CHECK(!pg.culled);
    CHECK(pg.mean_x == doctest::Approx(cam.cx).epsilon(1e-12));
    CHECK(pg.mean_y == doctest::Approx(cam.cy).epsilon(1e-12));
    CHECK(pg.depth == doctest::Approx(0.5));
  }
  SUBCASE("isotropic covariance projects to the pinhole scaling plus floor") {
    double sigma = 0.01, d = 0.5;
    ProjectedGaussian pg = project_gaussian(Vec3(0, 0, 0), sigma * sigma * Mat3::Identity(), cam);
    double expect = std::pow(cam.fx * sigma / d, 2) + 0.3;
    CHECK(pg.cov_a == doctest::Approx(expect).epsilon(0.01));
    CHECK(pg.cov_c == doctest::Approx(expect).epsilon(0.01));
    CHECK(std::abs(pg.cov_b) < 0.01 * expect);
  }
  SUBCASE("behind-camera Gaussians are culled") {
    ProjectedGaussian pg = project_gaussian(Vec3(0, 0, 1.0), 1e-6 * Mat3::Identity(), cam);
    CHECK(pg.culled);
  }
}

TEST_CASE("projection jacobian matches finite differences") {
  CameraView cam = test_camera(32);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (int k = 0; k < 10; ++k) {
    Vec3 mu(0.1 + u(rng), 0.1 + u(rng), 0.02 + 0.5 * std::abs(u(rng)));
    Mat3 cov = 1e-5 * Mat3::Identity();
    double h = 1e-6;
    ProjectedGaussian base = project_gaussian(mu, cov, cam);
    REQUIRE(!base.culled);
    Vec3 xc = cam.to_camera(mu);
    double invz = 1.0 / xc.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx * invz, 0, -cam.fx * xc.x() * invz * invz,
         0, cam.fy * invz, -cam.fy * xc.y() * invz * invz;
    for (int c = 0; c < 3; ++c) {
      Vec3 dc = Vec3::Zero();
      dc(c) = h;
      // perturb in camera space: move mu by W^T dc
      Vec3 mu_p = mu + cam.rotation().transpose() * dc;
      Vec3 mu_m = mu - cam.rotation().transpose() * dc;
      ProjectedGaussian pp = project_gaussian(mu_p, cov, cam);
      ProjectedGaussian pm = project_gaussian(mu_m, cov, cam);
      double fdx = (pp.mean_x - pm.mean_x) / (2 * h);
      double fdy = (pp.mean_y - pm.mean_y) / (2 * h);
      CHECK(std::abs(fdx - j(0, c)) < 1e-4 * std::max(1.0, std::abs(j(0, c))));
      CHECK(std::abs(fdy - j(1, c)) < 1e-4 * std::max(1.0, std::abs(j(1, c))));
    }
  }
}

namespace {
// camera whose principal point puts `target` exactly on the center of pixel
// (w/2, h/2), so the Gaussian there is evaluated at zero offset
CameraView centered_camera(const Vec3& target, int wh, double dist) {
  CameraView cam = look_at_camera(target + Vec3(0, 0, dist), target, 1.2 * wh, wh, wh);
  cam.cx = wh / 2 + 0.5;
  cam.cy = wh / 2 + 0.5;
  return cam;
}
}  // namespace

TEST_CASE("single opaque Gaussian renders its color at the center") {
  MicroScene s = make_micro_scene(5, 1);
  s.cloud.opacity_logit[0] = 20.0;  // sigmoid -> 1
  s.cloud.color[0] = Vec3(0.3, 0.7, 0.2);
  Vec3 mu = barycentric_to_world(s.rest, s.cloud.face_id[0], s.cloud.bc[0]);
  CameraView cam = centered_camera(mu, 16, 0.5);
  RenderOutput out = render_view(s.cloud, s.rest, s.rest, cam);
  const double* c = out.rgb.at(8, 8);
  CHECK(std::abs(c[0] - 0.3) < 1e-3);
  CHECK(std::abs(c[1] - 0.7) < 1e-3);
  CHECK(std::abs(c[2] - 0.2) < 1e-3);
}

TEST_CASE("front opaque Gaussian occludes the rear one") {
  // two Gaussians at the same barycentric spot of a two-layer mesh; the top
  // layer faces the camera
  MicroScene s = make_micro_scene(6, 2);
  std::vector<Vec3> pts = s.rest.vertices();
  for (const auto& p : s.rest.vertices()) pts.push_back(p + Vec3(0, 0, -0.1));
  std::vector<std::array<int, 3>> faces = s.rest.topology().faces;
  for (auto f : s.rest.topology().faces) faces.push_back({f[0] + 4, f[1] + 4, f[2] + 4});
  AugmentedMesh merged(pts, faces);

  s.cloud.face_id = {0, 2};
  s.cloud.bc = {{0.3, 0.3, 0.4}, {0.3, 0.3, 0.4}};
  s.cloud.opacity_logit = {30.0, 30.0};
  s.cloud.color = {Vec3(1, 0, 0), Vec3(0, 1, 0)};
  s.cloud.log_scales = {Vec3::Constant(std::log(0.03)), Vec3::Constant(std::log(0.03))};
  s.cloud.rotation = {Eigen::Vector4d(1, 0, 0, 0), Eigen::Vector4d(1, 0, 0, 0)};

  Vec3 mu = barycentric_to_world(merged, 0, s.cloud.bc[0]);
  CameraView cam = centered_camera(mu, 16, 0.5);  // both project onto pixel (8,8)
  RenderOutput out = render_view(s.cloud, merged, merged, cam);
  const double* c = out.rgb.at(8, 8);
  CHECK(c[0] > 1.0 - 1e-6);  // front transmittance cuts the rear term to zero
  CHECK(c[1] < 1e-6);
}

TEST_CASE("two coincident half-opacity Gaussians blend per the compositing rule") {
  // alpha at the evaluated pixel is 0.5 for both; expect 0.5 c1 + 0.25 c2
  MicroScene s = make_micro_scene(7, 2);
  s.cloud.face_id = {0, 2};
  // same trick: two-layer mesh
  std::vector<Vec3> pts = s.rest.vertices();
  for (const auto& p : s.rest.vertices()) pts.push_back(p + Vec3(0, 0, -0.1));
  std::vector<std::array<int, 3>> faces = s.rest.topology().faces;
  for (auto f : s.rest.topology().faces) faces.push_back({f[0] + 4, f[1] + 4, f[2] + 4});
  AugmentedMesh merged(pts, faces);

  s.cloud.bc = {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {1.0 / 3, 1.0 / 3, 1.0 / 3}};
  s.cloud.log_scales = {Vec3::Constant(std::log(0.05)), Vec3::Constant(std::log(0.05))};
  s.cloud.rotation = {Eigen::Vector4d(1, 0, 0, 0), Eigen::Vector4d(1, 0, 0, 0)};
  s.cloud.color = {Vec3(1, 0, 0), Vec3(0, 1, 0)};

  // camera straight above the shared center so both project to one pixel
  Vec3 center = barycentric_to_world(merged, 0, s.cloud.bc[0]);
  CameraView cam = look_at_camera(center + Vec3(0, 0, 0.5), center, 1.2 * 16, 16, 16);

  // choose logits so alpha at the exact pixel center equals 0.5
  RenderOutput probe = render_view(s.cloud, merged, merged, cam);
  auto alpha_at_center = [&](int gi, double logit) {
    ProjectedGaussian pg = probe.proj[static_cast<std::size_t>(gi)];
    double px = std::floor(pg.mean_x) + 0.5, py = std::floor(pg.mean_y) + 0.5;
    double dx = px - pg.mean_x, dy = py - pg.mean_y;
    double q = pg.inv_a * dx * dx + 2 * pg.inv_b * dx * dy + pg.inv_c * dy * dy;
    return 1.0 / (1.0 + std::exp(-logit)) * std::exp(-0.5 * q);
  };
  // solve sigmoid(logit) * G = 0.5 for each
  for (int gi = 0; gi < 2; ++gi) {
    double gval = alpha_at_center(gi, 100.0);  // opacity ~ 1 -> G value
    double target_sig = 0.5 / gval;
    REQUIRE(target_sig < 1.0);
    s.cloud.opacity_logit[static_cast<std::size_t>(gi)] = std::log(target_sig / (1 - target_sig));
  }
  RenderOutput out = render_view(s.cloud, merged, merged, cam);
  ProjectedGaussian pg = out.proj[0];
  int px = static_cast<int>(std::floor(pg.mean_x)), py = static_cast<int>(std::floor(pg.mean_y));
  const double* c = out.rgb.at(px, py);
  CHECK(c[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(c[1] == doctest::Approx(0.25).epsilon(1e-6));
  CHECK(out.accum_opacity[static_cast<std::size_t>(py) * 16 + static_cast<std::size_t>(px)] ==
        doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("empty cloud renders the background") {
  GaussianCloud empty;
  AugmentedMesh m = testing::two_triangle_mesh();
  RenderOutput out = render_view(empty, m, m, test_camera());
  for (double v : out.rgb.px) CHECK(v == 0.0);
}

TEST_CASE("parallel rasterization is bit-identical to the serial reference") {
  SceneConfig sc;
  sc.image_width = sc.image_height = 48;
  sc.timesteps = 2;
  sc.views = 1;
  sc.resolution = 6;
  sc.seed = 3;
  Scene scene = generate_scene(sc);
  AugmentedMesh state = scene.state(2);
  RenderOutput par = render_view(scene.gt_cloud, state, scene.rest, scene.cameras[0], true);
  RenderOutput ser = render_view(scene.gt_cloud, state, scene.rest, scene.cameras[0], false);
  Image ref = render_view_reference(scene.gt_cloud, state, scene.rest, scene.cameras[0]);
  CHECK(par.rgb.px == ser.rgb.px);
  CHECK(par.rgb.px == ref.px);
}

TEST_CASE("zero pixel gradient produces zero parameter gradients") {
  MicroScene s = make_micro_scene(8);
  RenderOutput out = render_view(s.cloud, s.deformed, s.rest, s.cam);
  Image zero(s.cam.width, s.cam.height);
  RenderGrads g = render_backward(out, s.cloud, s.deformed, s.rest, s.cam, zero);
  for (const auto& v : g.d_vertices) CHECK(v.norm() == 0.0);
  for (const auto& v : g.d_color) CHECK(v.norm() == 0.0);
}

TEST_CASE("render_backward matches finite differences on micro-scenes") {
  // the acceptance suite runs the full 20-scene version; this is a smoke test
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> u(-1, 1);
  FdStats vertex_stats, color_stats, opacity_stats, scale_stats, bc_stats, rot_stats;

  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    MicroScene s = make_micro_scene(100 + seed, 4, true);
    Image pixel_grad(s.cam.width, s.cam.height);
    for (double& v : pixel_grad.px) v = u(rng);

    RenderOutput out = render_view(s.cloud, s.deformed, s.rest, s.cam);
    RenderGrads g = render_backward(out, s.cloud, s.deformed, s.rest, s.cam, pixel_grad);
    const double h = 1e-5;

    auto fd_objective = [&](MicroScene& scene) { return render_objective(scene, pixel_grad); };

    // vertices (isotropic scales: face-frame stop-gradient is exact)
    for (std::size_t vi = 0; vi < s.deformed.vertex_count(); ++vi) {
      for (int c = 0; c < 3; ++c) {
        MicroScene sp = s, sm = s;
        std::vector<Vec3> xp = s.deformed.vertices(), xm = s.deformed.vertices();
        xp[vi](c) += h;
        xm[vi](c) -= h;
        sp.deformed = s.deformed.with_state(xp, s.deformed.velocities());
        sm.deformed = s.deformed.with_state(xm, s.deformed.velocities());
        double fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(vertex_stats, g.d_vertices[vi](c), fd, 1e-4);
      }
    }
    for (std::size_t gi = 0; gi < s.cloud.size(); ++gi) {
      for (int c = 0; c < 3; ++c) {
        MicroScene sp = s, sm = s;
        sp.cloud.color[gi](c) += h;
        sm.cloud.color[gi](c) -= h;
        double fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(color_stats, g.d_color[gi](c), fd, 1e-4);

        sp = s;
        sm = s;
        sp.cloud.log_scales[gi](c) += h;
        sm.cloud.log_scales[gi](c) -= h;
        fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(scale_stats, g.d_log_scales[gi](c), fd, 1e-4);

        sp = s;
        sm = s;
        sp.cloud.bc[gi][c] += h;
        sm.cloud.bc[gi][c] -= h;
        fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(bc_stats, g.d_bc[gi](c), fd, 1e-4);
      }
      {
        MicroScene sp = s, sm = s;
        sp.cloud.opacity_logit[gi] += h;
        sm.cloud.opacity_logit[gi] -= h;
        double fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(opacity_stats, g.d_opacity_logit[gi], fd, 1e-4);
      }
      for (int c = 0; c < 4; ++c) {
        MicroScene sp = s, sm = s;
        sp.cloud.rotation[gi](c) += h;
        sm.cloud.rotation[gi](c) -= h;
        double fd = (fd_objective(sp) - fd_objective(sm)) / (2 * h);
        accumulate_rel_error(rot_stats, g.d_rotation[gi](c), fd, 1e-4);
      }
    }
  }
  CHECK(vertex_stats.percentile(0.95) < 1e-3);
  CHECK(color_stats.percentile(0.95) < 1e-3);
  CHECK(opacity_stats.percentile(0.95) < 1e-3);
  CHECK(scale_stats.percentile(0.95) < 1e-3);
  CHECK(bc_stats.percentile(0.95) < 1e-3);
  CHECK(rot_stats.percentile(0.95) < 1e-3);
}

TEST_CASE("rigid-motion equivariance of the renderer") {
  MicroScene s = make_micro_scene(11, 4, false);
  std::mt19937_64 rng(12);
  Mat3 q = testing::random_rotation(rng);
  Vec3 t(0.05, -0.02, 0.03);

  std::vector<Vec3> x = s.deformed.vertices();
  for (auto& p : x) p = q * p + t;
  AugmentedMesh moved = s.deformed.with_state(x, s.deformed.velocities());

  CameraView cam2 = s.cam;
  Eigen::Matrix4d rigid = Eigen::Matrix4d::Identity();
  rigid.topLeftCorner<3, 3>() = q;
  rigid.topRightCorner<3, 1>() = t;
  cam2.world_to_cam = s.cam.world_to_cam * rigid.inverse();

  Image a = render_view(s.cloud, s.deformed, s.rest, s.cam).rgb;
  Image b = render_view(s.cloud, moved, s.rest, cam2).rgb;
  double max_diff = 0;
  for (std::size_t i = 0; i < a.px.size(); ++i) max_diff = std::max(max_diff, std::abs(a.px[i] - b.px[i]));
  CHECK(max_diff < 1e-6);
}

TEST_CASE("accumulated opacity stays in [0,1]") {
  MicroScene s = make_micro_scene(13, 8, false);
  RenderOutput out = render_view(s.cloud, s.deformed, s.rest, s.cam);
  for (double a : out.accum_opacity) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
}
