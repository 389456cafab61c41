#include "splatsim/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "splatsim/error.hpp"

namespace splatsim {

RigidTransform RigidTransform::from_axis_angle(const Vec3& axis, double angle,
                                               const Vec3& t) {
  return {Quat(Eigen::AngleAxisd(angle, axis.normalized())), t};
}

RigidTransform RigidTransform::planar(double x, double y, double theta) {
  return from_axis_angle(Vec3::UnitZ(), theta, Vec3(x, y, 0.0));
}

Quat rpy_to_quat(const Vec3& rpy) {
  return Quat(Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
              Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
              Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()));
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = (rotation * other.rotation).normalized();
  out.translation = rotation * other.translation + translation;
  return out;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.conjugate();
  out.translation = -(out.rotation * translation);
  return out;
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation_matrix();
  m.topRightCorner<3, 1>() = translation;
  return m;
}

double RigidTransform::angle() const {
  const double w = std::min(1.0, std::abs(rotation.normalized().w()));
  return 2.0 * std::acos(w);
}

Quat canonical(const Quat& q) {
  Quat n = q.normalized();
  if (n.w() < 0.0) n.coeffs() = -n.coeffs();
  return n;
}

double rotation_distance(const RigidTransform& a, const RigidTransform& b) {
  // Stable for tiny angles, unlike acos of the dot product.
  const Quat d = (a.rotation.conjugate() * b.rotation).normalized();
  const double s = d.vec().norm();
  return 2.0 * std::atan2(s, std::abs(d.w()));
}

double translation_distance(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

bool OrientedBox::contains(const Vec3& p) const {
  const Vec3 local = rotation.conjugate() * (p - center);
  return std::abs(local.x()) <= half_extents.x() &&
         std::abs(local.y()) <= half_extents.y() &&
         std::abs(local.z()) <= half_extents.z();
}

OrientedBox OrientedBox::transformed(const RigidTransform& t) const {
  return {t.apply(center), half_extents, (t.rotation * rotation).normalized()};
}

std::size_t particles_in_obb(std::span<const Vec3> points,
                             const OrientedBox& box) {
  return static_cast<std::size_t>(std::count_if(
      points.begin(), points.end(),
      [&](const Vec3& p) { return box.contains(p); }));
}

Vec3 centroid(std::span<const Vec3> points) {
  Vec3 c = Vec3::Zero();
  if (points.empty()) return c;
  for (const Vec3& p : points) c += p;
  return c / static_cast<double>(points.size());
}

RigidTransform kabsch(std::span<const Vec3> src, std::span<const Vec3> dst,
                      std::span<const double> weights, int* rank) {
  if (src.size() != dst.size() || src.empty()) {
    throw InvalidArgument("kabsch: point sets must be non-empty and equal size");
  }
  if (!weights.empty() && weights.size() != src.size()) {
    throw InvalidArgument("kabsch: weight count mismatch");
  }
  double total = 0.0;
  Vec3 cs = Vec3::Zero();
  Vec3 cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    cs += w * src[i];
    cd += w * dst[i];
    total += w;
  }
  if (total <= 0.0) throw InvalidArgument("kabsch: zero total weight");
  cs /= total;
  cd /= total;

  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    h += w * (src[i] - cs) * (dst[i] - cd).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (rank != nullptr) {
    const auto& sv = svd.singularValues();
    const double tol = std::max(sv(0), 1e-300) * 1e-9;
    *rank = static_cast<int>((sv.array() > tol).count());
    if (sv(0) <= 1e-300) *rank = 0;
  }
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();

  RigidTransform out;
  out.rotation = Quat(r).normalized();
  out.translation = cd - out.rotation * cs;
  return out;
}

}  // namespace splatsim
