#pragma once

#include <optional>
#include <span>
#include <vector>

#include "splatsim/alignment.hpp"
#include "splatsim/geometry.hpp"
#include "splatsim/image.hpp"
#include "splatsim/splat.hpp"
#include "splatsim/springmass.hpp"

namespace splatsim {

// Pinhole camera, OpenCV axes (x right, y down, z forward). Pixel (i, j) is
// sampled at image coordinates (i, j).
struct Camera {
  double fx = 500.0, fy = 500.0, cx = 320.0, cy = 240.0;
  int width = 640, height = 480;
  RigidTransform world_to_camera;
  // Link-attached cameras: camera-to-world = link pose * mount_offset.
  int mount_link = -1;
  RigidTransform mount_offset;

  void validate() const;
  // Camera at `eye` looking at `target`; `up` fixes the roll.
  static Camera look_at(const Vec3& eye, const Vec3& target,
                        const Vec3& up = Vec3::UnitZ());
  // World pose for the current link poses; fixed cameras return themselves.
  Camera resolved(std::span<const RigidTransform> link_poses) const;
};

struct LbsBinding {
  int k = 0;
  std::vector<int> indices;     // kernels x k
  std::vector<double> weights;  // kernels x k, rows sum to 1
  std::size_t kernels() const { return k ? indices.size() / k : 0; }
};

// Inverse-distance weights over the k nearest particles (eps = 1e-6 m).
LbsBinding compute_lbs_weights(const GaussianSet& kernels,
                               std::span<const Vec3> particles, int k = 16);

// Spring neighbourhood of every particle, the particle itself first.
std::vector<std::vector<int>> particle_neighborhoods(
    const SpringMassModel& model);

// Blends per-particle rigid motions (Procrustes over each neighbourhood,
// prev -> next) onto the bound kernels. Only position and rotation change.
void lbs_update_kernels(GaussianSet& kernels, const LbsBinding& binding,
                        std::span<const Vec3> particles_prev,
                        std::span<const Vec3> particles_next,
                        const std::vector<std::vector<int>>& neighborhoods);

// Applies pose_next * pose_prev^-1 to every kernel with the given label.
void update_rigid_kernels(GaussianSet& kernels, int label,
                          const RigidTransform& pose_prev,
                          const RigidTransform& pose_next);

struct RenderOptions {
  int tile = 16;
  bool naive = false;  // every kernel at every pixel, for checking
  Vec3 background = Vec3::Zero();
  double near = 0.01;
};

inline constexpr double kMaxSplatAlpha = 0.999;

Image render(const GaussianSet& kernels, const Camera& camera,
             const std::optional<ColorPolynomial>& color_transform = {},
             const RenderOptions& opt = {});

}  // namespace splatsim
