#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace semfusion {

/// Which direction a transform maps. Trajectory files carry world-from-camera
/// poses; everything downstream of ingest works camera-from-world.
enum class PoseFrame { kCameraFromWorld, kWorldFromCamera };

/// Rigid transform as unit quaternion + translation, tagged with its mapping
/// direction. Immutable value type; the quaternion is renormalized after
/// every composition so chained transforms do not drift.
class Pose {
 public:
  Pose()
      : rotation_(Eigen::Quaterniond::Identity()),
        translation_(Eigen::Vector3d::Zero()),
        frame_(PoseFrame::kCameraFromWorld) {}

  Pose(const Eigen::Quaterniond& rotation, const Eigen::Vector3d& translation,
       PoseFrame frame)
      : rotation_(rotation.normalized()), translation_(translation), frame_(frame) {}

  static Pose identity(PoseFrame frame = PoseFrame::kCameraFromWorld) {
    return Pose(Eigen::Quaterniond::Identity(), Eigen::Vector3d::Zero(), frame);
  }

  const Eigen::Quaterniond& rotation() const { return rotation_; }
  const Eigen::Vector3d& translation() const { return translation_; }
  PoseFrame frame() const { return frame_; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation_ * p + translation_;
  }

  /// Group inverse; keeps the frame tag (see flipped() for convention flips).
  Pose inverse() const {
    Eigen::Quaterniond q_inv = rotation_.conjugate();
    return Pose(q_inv, q_inv * (-translation_), frame_);
  }

  /// The same physical transform read in the opposite direction:
  /// a world-from-camera pose flipped() is the camera-from-world pose.
  Pose flipped() const {
    Eigen::Quaterniond q_inv = rotation_.conjugate();
    PoseFrame other = frame_ == PoseFrame::kCameraFromWorld
                          ? PoseFrame::kWorldFromCamera
                          : PoseFrame::kCameraFromWorld;
    return Pose(q_inv, q_inv * (-translation_), other);
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.block<3, 3>(0, 0) = rotation_.toRotationMatrix();
    m.block<3, 1>(0, 3) = translation_;
    return m;
  }

  bool approx_equal(const Pose& other, double tol = 1e-9) const {
    // Quaternions q and -q encode the same rotation.
    double q_dist = std::min(
        (rotation_.coeffs() - other.rotation_.coeffs()).norm(),
        (rotation_.coeffs() + other.rotation_.coeffs()).norm());
    return frame_ == other.frame_ && q_dist <= tol &&
           (translation_ - other.translation_).norm() <= tol;
  }

 private:
  Eigen::Quaterniond rotation_;
  Eigen::Vector3d translation_;
  PoseFrame frame_;
};

/// a then-applies-after b: result maps like a ∘ b. Throws std::invalid_argument
/// when the frame tags disagree.
Pose compose(const Pose& a, const Pose& b);

}  // namespace semfusion
