#include "splatsim/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "splatsim/error.hpp"
#include "splatsim/spatial.hpp"

namespace splatsim {

void Camera::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    throw InvalidArgument("camera focal lengths must be positive");
  if (width <= 0 || height <= 0)
    throw InvalidArgument("camera resolution must be positive");
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitX());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 cam_to_world;
  cam_to_world.col(0) = x;
  cam_to_world.col(1) = y;
  cam_to_world.col(2) = z;
  Camera c;
  c.world_to_camera =
      RigidTransform{Quat(cam_to_world), eye}.inverse();
  return c;
}

Camera Camera::resolved(std::span<const RigidTransform> link_poses) const {
  if (mount_link < 0) return *this;
  if (mount_link >= static_cast<int>(link_poses.size()))
    throw InvalidArgument("camera mount link out of range");
  Camera c = *this;
  c.world_to_camera = (link_poses[mount_link] * mount_offset).inverse();
  return c;
}

LbsBinding compute_lbs_weights(const GaussianSet& kernels,
                               std::span<const Vec3> particles, int k) {
  if (particles.empty()) throw InvalidArgument("LBS needs particles");
  if (k < 1) throw InvalidArgument("LBS needs k >= 1");
  const KdTree tree(std::vector<Vec3>(particles.begin(), particles.end()));
  LbsBinding b;
  b.k = std::min<int>(k, static_cast<int>(particles.size()));
  for (const GaussianKernel& g : kernels.kernels) {
    const auto nn = tree.knn(g.position, static_cast<std::size_t>(b.k));
    double sum = 0.0;
    const std::size_t row = b.weights.size();
    for (const auto& [idx, d2] : nn) {
      const double w = 1.0 / (std::sqrt(d2) + 1e-6);
      b.indices.push_back(idx);
      b.weights.push_back(w);
      sum += w;
    }
    for (std::size_t i = row; i < b.weights.size(); ++i) b.weights[i] /= sum;
  }
  return b;
}

std::vector<std::vector<int>> particle_neighborhoods(
    const SpringMassModel& model) {
  std::vector<std::vector<int>> out(model.size());
  for (std::size_t i = 0; i < model.size(); ++i) {
    out[i].push_back(static_cast<int>(i));
    for (const auto& [s, other] : model.incident(static_cast<int>(i)))
      out[i].push_back(other);
  }
  return out;
}

void lbs_update_kernels(GaussianSet& kernels, const LbsBinding& binding,
                        std::span<const Vec3> particles_prev,
                        std::span<const Vec3> particles_next,
                        const std::vector<std::vector<int>>& neighborhoods) {
  if (binding.kernels() != kernels.size())
    throw InvalidArgument("LBS binding does not match the kernel count");
  if (particles_prev.size() != particles_next.size() ||
      neighborhoods.size() != particles_prev.size())
    throw InvalidArgument("LBS particle arrays differ in size");

  // Local rigid motion per particle, computed lazily for bound particles.
  const std::size_t n = particles_prev.size();
  std::vector<Quat> rot(n, Quat::Identity());
  std::vector<char> moved(n, 0), done(n, 0);
  auto motion = [&](int j) {
    if (done[j]) return;
    done[j] = 1;
    std::vector<Vec3> a, b;
    for (int m : neighborhoods[j]) {
      a.push_back(particles_prev[m]);
      b.push_back(particles_next[m]);
      if (particles_prev[m] != particles_next[m]) moved[j] = 1;
    }
    if (!moved[j] || a.size() < 3) return;
    int rank = 0;
    const RigidTransform t = kabsch(a, b, {}, &rank);
    if (rank >= 2) rot[j] = t.rotation;
  };

  const int k = binding.k;
  for (std::size_t g = 0; g < kernels.size(); ++g) {
    bool any = false;
    for (int s = 0; s < k; ++s) {
      const int j = binding.indices[g * k + s];
      motion(j);
      any = any || moved[j];
    }
    if (!any) continue;
    GaussianKernel& ker = kernels.kernels[g];
    Vec3 pos = Vec3::Zero();
    Eigen::Vector4d qsum = Eigen::Vector4d::Zero();
    const Quat& ref = rot[binding.indices[g * k]];
    for (int s = 0; s < k; ++s) {
      const int j = binding.indices[g * k + s];
      const double w = binding.weights[g * k + s];
      pos += w * (particles_next[j] + rot[j] * (ker.position - particles_prev[j]));
      const double sign = rot[j].coeffs().dot(ref.coeffs()) < 0.0 ? -1.0 : 1.0;
      qsum += w * sign * rot[j].coeffs();
    }
    Quat blend;
    blend.coeffs() = qsum.normalized();
    ker.position = pos;
    ker.rotation = (blend * ker.rotation).normalized();
  }
}

void update_rigid_kernels(GaussianSet& kernels, int label,
                          const RigidTransform& pose_prev,
                          const RigidTransform& pose_next) {
  if (pose_prev.translation == pose_next.translation &&
      pose_prev.rotation.coeffs() == pose_next.rotation.coeffs())
    return;
  const RigidTransform delta = pose_next * pose_prev.inverse();
  for (GaussianKernel& k : kernels.kernels) {
    if (k.label != label) continue;
    k.position = delta.apply(k.position);
    k.rotation = (delta.rotation * k.rotation).normalized();
  }
}

namespace {

struct Splat2D {
  double u, v;           // centre, pixels
  double a, b, c;        // inverse 2-D covariance [a b; b c]
  double opacity;
  Vec3 color;
  double depth;
  int x0, x1, y0, y1;    // inclusive pixel bounds of the alpha support
  std::size_t index;
};

// Screen-space dilation added to the projected covariance, in pixels^2.
constexpr double kDilation = 0.3;
constexpr double kMinAlpha = 1.0 / 255.0;

std::vector<Splat2D> project(const GaussianSet& set, const Camera& cam,
                             const std::optional<ColorPolynomial>& ct,
                             double near) {
  const Mat3 w = cam.world_to_camera.rotation_matrix();
  std::vector<Splat2D> out;
  for (std::size_t i = 0; i < set.kernels.size(); ++i) {
    const GaussianKernel& k = set.kernels[i];
    const double opacity = k.opacity();
    if (opacity < kMinAlpha) continue;
    const Vec3 p = cam.world_to_camera.apply(k.position);
    if (p.z() <= near) continue;
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / p.z(), 0.0, -cam.fx * p.x() / (p.z() * p.z()), 0.0,
        cam.fy / p.z(), -cam.fy * p.y() / (p.z() * p.z());
    const Eigen::Matrix<double, 2, 3> m = jac * w;
    Eigen::Matrix2d cov = m * k.covariance() * m.transpose();
    cov(0, 0) += kDilation;
    cov(1, 1) += kDilation;
    const double det = cov.determinant();
    if (!(det > 0.0)) continue;
    Splat2D s;
    s.u = cam.fx * p.x() / p.z() + cam.cx;
    s.v = cam.fy * p.y() / p.z() + cam.cy;
    if (std::abs(s.u) > 1e6 || std::abs(s.v) > 1e6) continue;
    s.a = cov(1, 1) / det;
    s.b = -cov(0, 1) / det;
    s.c = cov(0, 0) / det;
    s.opacity = opacity;
    s.color = ct ? apply_color_transform(*ct, k.color()) : k.color();
    s.depth = p.z();
    s.index = i;
    // Beyond this Mahalanobis radius alpha falls under kMinAlpha.
    const double m2 = 2.0 * std::log(std::min(opacity, kMaxSplatAlpha) / kMinAlpha);
    const double lmax =
        0.5 * (cov(0, 0) + cov(1, 1)) +
        std::sqrt(0.25 * (cov(0, 0) - cov(1, 1)) * (cov(0, 0) - cov(1, 1)) +
                  cov(0, 1) * cov(0, 1));
    const double r = std::min(std::sqrt(std::max(m2, 0.0) * lmax), 1e6);
    s.x0 = static_cast<int>(std::floor(s.u - r));
    s.x1 = static_cast<int>(std::ceil(s.u + r));
    s.y0 = static_cast<int>(std::floor(s.v - r));
    s.y1 = static_cast<int>(std::ceil(s.v + r));
    if (s.x1 < 0 || s.y1 < 0 || s.x0 >= cam.width || s.y0 >= cam.height)
      continue;
    out.push_back(s);
  }
  // Far to near; ties by kernel index.
  std::sort(out.begin(), out.end(), [](const Splat2D& l, const Splat2D& r) {
    if (l.depth != r.depth) return l.depth > r.depth;
    return l.index < r.index;
  });
  return out;
}

inline void composite(const Splat2D& s, double x, double y, Vec3& rgb,
                      double& alpha) {
  const double dx = x - s.u, dy = y - s.v;
  const double power = -0.5 * (s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy);
  if (power > 0.0) return;
  const double a = std::min(kMaxSplatAlpha, s.opacity * std::exp(power));
  if (a < kMinAlpha) return;
  rgb = a * s.color + (1.0 - a) * rgb;
  alpha = a + (1.0 - a) * alpha;
}

}  // namespace

Image render(const GaussianSet& kernels, const Camera& camera,
             const std::optional<ColorPolynomial>& color_transform,
             const RenderOptions& opt) {
  camera.validate();
  if (opt.tile < 1) throw InvalidArgument("render tile size must be >= 1");
  const std::vector<Splat2D> splats =
      project(kernels, camera, color_transform, opt.near);
  Image img(camera.width, camera.height);
  std::fill(img.rgb.begin(), img.rgb.end(), opt.background);

  if (opt.naive) {
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const std::size_t i = img.index(x, y);
        for (const Splat2D& s : splats) composite(s, x, y, img.rgb[i], img.alpha[i]);
      }
    return img;
  }

  const int tiles_x = (img.width + opt.tile - 1) / opt.tile;
  const int tiles_y = (img.height + opt.tile - 1) / opt.tile;
  std::vector<std::vector<int>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (std::size_t s = 0; s < splats.size(); ++s) {
    const Splat2D& sp = splats[s];
    const int tx0 = std::max(0, sp.x0 / opt.tile);
    const int tx1 = std::min(tiles_x - 1, sp.x1 / opt.tile);
    const int ty0 = std::max(0, sp.y0 / opt.tile);
    const int ty1 = std::min(tiles_y - 1, sp.y1 / opt.tile);
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(
            static_cast<int>(s));
  }

#pragma omp parallel for schedule(dynamic) if (bins.size() > 16)
  for (int t = 0; t < static_cast<int>(bins.size()); ++t) {
    const int tx = t % tiles_x, ty = t / tiles_x;
    const int x_end = std::min(img.width, (tx + 1) * opt.tile);
    const int y_end = std::min(img.height, (ty + 1) * opt.tile);
    for (int y = ty * opt.tile; y < y_end; ++y)
      for (int x = tx * opt.tile; x < x_end; ++x) {
        const std::size_t i = img.index(x, y);
        for (int s : bins[t]) {
          const Splat2D& sp = splats[s];
          if (x < sp.x0 || x > sp.x1 || y < sp.y0 || y > sp.y1) continue;
          composite(sp, x, y, img.rgb[i], img.alpha[i]);
        }
      }
  }
  return img;
}

}  // namespace splatsim
