#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "splatsim/geometry.hpp"

namespace splatsim {

// Zeroth-order spherical-harmonic constant used by splat exports.
inline constexpr double kShC0 = 0.28209479177387814;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// One anisotropic Gaussian. Appearance is stored in the splat-file
// parameterization (log scale, opacity logit, DC coefficient) so that
// save/load is lossless; the accessors return activated values.
struct GaussianKernel {
  Vec3 position = Vec3::Zero();
  Quat rotation = Quat::Identity();
  Vec3 log_scale = Vec3::Constant(std::log(0.01));
  double opacity_logit = 0.0;
  Vec3 color_dc = Vec3::Zero();
  int label = -1;  // link index or object id, -1 when unassigned

  Vec3 scale() const { return log_scale.array().exp(); }
  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 color() const {
    return (Vec3::Constant(0.5) + kShC0 * color_dc).cwiseMax(0.0).cwiseMin(1.0);
  }

  void set_scale(const Vec3& s) { log_scale = s.array().log(); }
  void set_opacity(double o) { opacity_logit = logit(o); }
  void set_color(const Vec3& rgb) {
    color_dc = (rgb - Vec3::Constant(0.5)) / kShC0;
  }

  // World-space covariance R diag(s^2) R^T.
  Mat3 covariance() const;
};

struct GaussianSet {
  std::vector<GaussianKernel> kernels;
  std::string frame = "world";

  std::size_t size() const { return kernels.size(); }
};

// Binary little-endian splat PLY. Required properties: x y z f_dc_0..2
// opacity scale_0..2 rot_0..3 (float or double). Optional integer `label`.
// Higher-order SH bands and normals are read and discarded.
GaussianSet load_splat_ply(const std::filesystem::path& path);
// Writes double-precision properties plus `label`.
void save_splat_ply(const GaussianSet& set, const std::filesystem::path& path);

}  // namespace splatsim
