#pragma once

#include <Eigen/Dense>

#include <numbers>

namespace meissner {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kMu0 = 4.0e-7 * std::numbers::pi;  // H/m
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Unit vector perpendicular to `axis`, chosen deterministically from the lab
// basis vector least aligned with it.
inline Vec3 perpendicular_to(const Vec3& axis) {
  const Vec3 a = axis.normalized();
  Vec3 seed = Vec3::UnitX();
  if (std::abs(a.y()) < std::abs(a.x()) && std::abs(a.y()) <= std::abs(a.z())) {
    seed = Vec3::UnitY();
  } else if (std::abs(a.z()) < std::abs(a.x()) && std::abs(a.z()) < std::abs(a.y())) {
    seed = Vec3::UnitZ();
  }
  return (seed - seed.dot(a) * a).normalized();
}

}  // namespace meissner
