#pragma once

#include <random>

#include "ct/mesh.hpp"

namespace ct::testing {

inline AugmentedMesh unit_square_mesh() {
  std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  return delaunay_mesh_from_points(pts);
}

inline AugmentedMesh two_triangle_mesh(double size = 0.2) {
  std::vector<Vec3> pts = {{0, 0, 0}, {size, 0, 0}, {size, size, 0}, {0, size, 0}};
  return delaunay_mesh_from_points(pts);
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> d(0, 1);
  Eigen::Quaterniond q(d(rng), d(rng), d(rng), d(rng));
  q.normalize();
  return q.toRotationMatrix();
}

// independent Procrustes oracle: Horn's closed-form quaternion method
inline Mat3 horn_procrustes(const std::array<Vec3, 3>& rest, const std::array<Vec3, 3>& deformed) {
  Vec3 rc = (rest[0] + rest[1] + rest[2]) / 3.0;
  Vec3 dc = (deformed[0] + deformed[1] + deformed[2]) / 3.0;
  Mat3 m = Mat3::Zero();
  for (int i = 0; i < 3; ++i) m += (rest[static_cast<std::size_t>(i)] - rc) * (deformed[static_cast<std::size_t>(i)] - dc).transpose();
  Eigen::Matrix4d k;
  double sxx = m(0, 0), sxy = m(0, 1), sxz = m(0, 2);
  double syx = m(1, 0), syy = m(1, 1), syz = m(1, 2);
  double szx = m(2, 0), szy = m(2, 1), szz = m(2, 2);
  k << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(k);
  Eigen::Vector4d q = es.eigenvectors().col(3);  // largest eigenvalue
  Eigen::Quaterniond quat(q(0), q(1), q(2), q(3));
  quat.normalize();
  return quat.toRotationMatrix();
}

}  // namespace ct::testing
