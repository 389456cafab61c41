#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <span>
#include <vector>

namespace splatsim {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

// Proper rigid motion. Stored as unit quaternion (w,x,y,z) + translation in
// meters. Frames are right-handed and z-up throughout the library.
struct RigidTransform {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Vec3& t) {
    return {Quat::Identity(), t};
  }
  static RigidTransform from_axis_angle(const Vec3& axis, double angle,
                                        const Vec3& t = Vec3::Zero());
  // Rotation about world z by `theta` followed by translation (x, y, 0).
  static RigidTransform planar(double x, double y, double theta);

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_vector(const Vec3& v) const { return rotation * v; }

  // (a * b).apply(p) == a.apply(b.apply(p))
  RigidTransform operator*(const RigidTransform& other) const;
  RigidTransform inverse() const;

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }
  Eigen::Matrix4d matrix() const;

  // Rotation angle of this transform in radians, in [0, pi].
  double angle() const;
};

// Fixed-axis roll, pitch, yaw (rotate about x, then y, then z).
Quat rpy_to_quat(const Vec3& rpy);

// Renormalizes and flips to w >= 0 so that equal rotations compare equal.
Quat canonical(const Quat& q);

// Angle in radians between two transforms' rotations and distance between
// their translations.
double rotation_distance(const RigidTransform& a, const RigidTransform& b);
double translation_distance(const RigidTransform& a, const RigidTransform& b);

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  Quat rotation = Quat::Identity();

  bool contains(const Vec3& p) const;
  OrientedBox transformed(const RigidTransform& t) const;
};

// Boundary-inclusive containment count.
std::size_t particles_in_obb(std::span<const Vec3> points,
                             const OrientedBox& box);

// Least-squares rigid fit (Kabsch/Procrustes) mapping src onto dst with
// optional per-point weights. Returns the rank of the centered
// cross-covariance through `rank` when non-null.
RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst,
                      std::span<const double> weights = {},
                      int* rank = nullptr);

Vec3 centroid(std::span<const Vec3> points);

}  // namespace splatsim
