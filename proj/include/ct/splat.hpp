#pragma once

#include <cstdint>
#include <optional>

#include "ct/camera.hpp"
#include "ct/image.hpp"
#include "ct/mesh.hpp"

namespace ct {

// Surface-pinned Gaussians. Face assignment, barycentric position, local
// rotation relative to the face frame, scales, opacity and color stay fixed
// while the mesh deforms: they are the cloth's time-invariant appearance.
struct GaussianCloud {
  std::vector<int> face_id;
  std::vector<BarycentricCoord> bc;
  std::vector<Eigen::Vector4d> rotation;     // unit quaternion (w,x,y,z), relative to face frame
  std::vector<Vec3> log_scales;              // world scale = exp, clamped to [1e-5, 0.1] m
  std::vector<double> opacity_logit;
  std::vector<Vec3> color;                   // RGB in [0,1]

  std::size_t size() const { return face_id.size(); }
  void validate(const AugmentedMesh& mesh) const;
  void remove(const std::vector<std::uint8_t>& keep);
};

constexpr double kLogScaleMin = -11.512925464970229;  // ln 1e-5
constexpr double kLogScaleMax = -2.302585092994046;   // ln 0.1

// per_face Gaussians per face; barycentric weights drawn from N(1/3, 0.05)
// and renormalized; tangential scales ~ 1/3 mean edge length, 1e-3 m normal.
GaussianCloud attach_gaussians(const AugmentedMesh& mesh, int per_face, std::uint64_t rng_seed);

struct WorldGaussian {
  Vec3 mu;
  Mat3 cov;
  Mat3 rot;         // full rotation R = R_face * R_local
  Mat3 face_frame;  // R_face, treated as constant in the backward pass
};

// World-space means and covariances for the current deformation.
std::vector<WorldGaussian> world_gaussians(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                                           const AugmentedMesh& rest_mesh);

struct ProjectedGaussian {
  double mean_x = 0, mean_y = 0;
  double cov_a = 0, cov_b = 0, cov_c = 0;  // 2x2 image covariance [[a,b],[b,c]]
  double inv_a = 0, inv_b = 0, inv_c = 0;
  double depth = 0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;    // inclusive 3-sigma pixel box
  bool culled = true;
};

// EWA-style projection: mean by perspective, covariance J W cov W^T J^T with
// a 0.3 px^2 diagonal floor. Gaussians behind the near plane (1e-3 m) are
// marked culled.
ProjectedGaussian project_gaussian(const Vec3& mu, const Mat3& cov, const CameraView& cam);

struct RenderOutput {
  Image rgb;
  std::vector<double> accum_opacity;   // H*W
  // contributing Gaussians per pixel (CSR, row-major pixels), front to back
  std::vector<int> contrib_offsets;
  std::vector<int> contrib_ids;
  // retained forward state for the backward pass
  std::vector<WorldGaussian> world;
  std::vector<ProjectedGaussian> proj;
  std::vector<int> sorted;             // visible Gaussian ids, near to far
  int cloud_size = 0;
};

// Front-to-back alpha blending over a global depth sort, black background.
RenderOutput render_view(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                         const AugmentedMesh& rest_mesh, const CameraView& cam, bool parallel = true);

// Simple serial reference: same contract, no row lists, no retained state.
Image render_view_reference(const GaussianCloud& cloud, const AugmentedMesh& mesh,
                            const AugmentedMesh& rest_mesh, const CameraView& cam);

struct RenderGrads {
  std::vector<Vec3> d_vertices;
  std::vector<Vec3> d_color;
  std::vector<double> d_opacity_logit;
  std::vector<Vec3> d_log_scales;
  std::vector<Eigen::Vector4d> d_rotation;
  std::vector<Vec3> d_bc;

  void resize(std::size_t n_vertices, std::size_t n_gaussians);
  void add(const RenderGrads& other);
};

// Exact reverse-mode gradients of sum_pixels <pixel_grad, rendered> through
// blending, projection and the mesh-constrained Gaussian assembly. Vertex
// gradients flow through the barycentric means; face frames are treated as
// constant.
RenderGrads render_backward(const RenderOutput& out, const GaussianCloud& cloud,
                            const AugmentedMesh& mesh, const AugmentedMesh& rest_mesh,
                            const CameraView& cam, const Image& pixel_grad, bool parallel = true);

// Debug dump: one row per Gaussian with face id, barycentric coords, camera
// depth, screen-space mean and alpha at its center.
void dump_gaussian_csv(const std::string& path, const GaussianCloud& cloud, const RenderOutput& out);

}  // namespace ct
