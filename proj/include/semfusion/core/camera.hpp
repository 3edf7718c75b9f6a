#pragma once

#include <optional>

#include <Eigen/Core>

#include "semfusion/core/pose.hpp"

namespace semfusion {

/// Pinhole parameters in pixels. No distortion model.
struct Intrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  /// Throws ConfigError naming the violated field.
  void validate() const;

  /// Same parameters at 1/2^n resolution (principal point and focals scaled).
  Intrinsics scaled(double factor) const {
    return Intrinsics{fx * factor, fy * factor, cx * factor, cy * factor,
                      static_cast<int>(width * factor),
                      static_cast<int>(height * factor)};
  }
};

/// Continuous pixel location plus the camera-frame depth that produced it.
struct PixelCoord {
  double u = 0;
  double v = 0;
  double depth = 0;
};

/// Pinhole projection of a world point through a camera-from-world pose.
/// Returns the pixel and camera-frame depth when the point is in front of the
/// camera and inside [0, width-1] x [0, height-1]; nullopt otherwise.
/// Throws std::invalid_argument if the pose is not camera-from-world.
std::optional<PixelCoord> project(const Intrinsics& K, const Pose& camera_from_world,
                                  const Eigen::Vector3d& p_world);

/// Projection of a point already expressed in the camera frame.
std::optional<PixelCoord> project_camera(const Intrinsics& K,
                                         const Eigen::Vector3d& p_cam);

/// Back-projection to the camera frame. Throws std::invalid_argument for
/// non-positive depth.
Eigen::Vector3d unproject(const Intrinsics& K, double u, double v, double depth);

/// Nearest-pixel index for a continuous coordinate.
inline int nearest_pixel(double x) { return static_cast<int>(std::lround(x)); }

}  // namespace semfusion
