#include "semfusion/core/pose.hpp"

#include <stdexcept>

namespace semfusion {

Pose compose(const Pose& a, const Pose& b) {
  if (a.frame() != b.frame()) {
    throw std::invalid_argument("compose: pose convention flags disagree");
  }
  Eigen::Quaterniond q = a.rotation() * b.rotation();
  Eigen::Vector3d t = a.rotation() * b.translation() + a.translation();
  return Pose(q, t, a.frame());  // ctor renormalizes
}

}  // namespace semfusion
