#pragma once

#include <Eigen/Dense>

#include "ct/mesh.hpp"

namespace ct {

// Pinhole camera: world-to-camera rigid transform plus intrinsics.
// Camera frame is +x right, +y down, +z forward; pixel (ix, iy) has its
// center at (ix + 0.5, iy + 0.5).
struct CameraView {
  Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  Mat3 rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_to_cam.topRightCorner<3, 1>(); }
  Vec3 to_camera(const Vec3& p_world) const { return rotation() * p_world + translation(); }
  void validate() const;
};

// Camera at `position` looking at `target`, image +y pointing away from
// world +z (or +x for near-vertical viewing directions).
CameraView look_at_camera(const Vec3& position, const Vec3& target, double focal_px, int width,
                          int height);

}  // namespace ct
