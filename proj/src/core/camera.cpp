#include "semfusion/core/camera.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "semfusion/core/errors.hpp"

namespace semfusion {

void Intrinsics::validate() const {
  std::ostringstream msg;
  if (!(fx > 0) || !(fy > 0)) {
    msg << "intrinsics.fx/fy: focal lengths must be positive (got " << fx << ", "
        << fy << ")";
    throw ConfigError(msg.str());
  }
  if (width <= 0 || height <= 0) {
    msg << "intrinsics.width/height: image size must be positive (got " << width
        << "x" << height << ")";
    throw ConfigError(msg.str());
  }
  if (!(cx > 0 && cx < width)) {
    msg << "intrinsics.cx: principal point must lie inside (0, width) (got " << cx
        << ")";
    throw ConfigError(msg.str());
  }
  if (!(cy > 0 && cy < height)) {
    msg << "intrinsics.cy: principal point must lie inside (0, height) (got " << cy
        << ")";
    throw ConfigError(msg.str());
  }
}

std::optional<PixelCoord> project_camera(const Intrinsics& K,
                                         const Eigen::Vector3d& p_cam) {
  if (p_cam.z() <= 0.0) return std::nullopt;
  const double u = K.fx * p_cam.x() / p_cam.z() + K.cx;
  const double v = K.fy * p_cam.y() / p_cam.z() + K.cy;
  if (u < 0.0 || u > K.width - 1 || v < 0.0 || v > K.height - 1) {
    return std::nullopt;
  }
  return PixelCoord{u, v, p_cam.z()};
}

std::optional<PixelCoord> project(const Intrinsics& K, const Pose& camera_from_world,
                                  const Eigen::Vector3d& p_world) {
  if (camera_from_world.frame() != PoseFrame::kCameraFromWorld) {
    throw std::invalid_argument("project: pose must be camera-from-world");
  }
  return project_camera(K, camera_from_world.apply(p_world));
}

Eigen::Vector3d unproject(const Intrinsics& K, double u, double v, double depth) {
  if (!(depth > 0.0)) {
    throw std::invalid_argument("unproject: depth must be positive");
  }
  return Eigen::Vector3d((u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth);
}

}  // namespace semfusion
