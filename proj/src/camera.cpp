#include "ct/camera.hpp"

#include <stdexcept>

namespace ct {

void CameraView::validate() const {
  if (!(fx > 0) || !(fy > 0)) throw std::invalid_argument("focal lengths must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("image dimensions must be positive");
  Mat3 r = rotation();
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
    throw std::invalid_argument("camera rotation is not orthonormal");
}

CameraView look_at_camera(const Vec3& position, const Vec3& target, double focal_px, int width,
                          int height) {
  Vec3 forward = (target - position).normalized();
  Vec3 up_hint = std::abs(forward.z()) > 0.99 ? Vec3(1, 0, 0) : Vec3(0, 0, 1);
  Vec3 right = forward.cross(up_hint).normalized();
  Vec3 down = forward.cross(right);  // +y down in image space

  CameraView cam;
  Mat3 r;
  r.row(0) = right;
  r.row(1) = down;
  r.row(2) = forward;
  cam.world_to_cam.setIdentity();
  cam.world_to_cam.topLeftCorner<3, 3>() = r;
  cam.world_to_cam.topRightCorner<3, 1>() = -r * position;
  cam.fx = cam.fy = focal_px;
  cam.cx = width / 2.0;
  cam.cy = height / 2.0;
  cam.width = width;
  cam.height = height;
  return cam;
}

}  // namespace ct
