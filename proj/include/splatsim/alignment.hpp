#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "splatsim/geometry.hpp"
#include "splatsim/image.hpp"
#include "splatsim/mesh.hpp"
#include "splatsim/robot.hpp"
#include "splatsim/splat.hpp"

namespace splatsim {

struct LabeledCloud {
  std::vector<Vec3> points;
  std::vector<int> labels;
};

// Area-weighted uniform samples on the surface. Writes the source triangle of
// each sample to `triangles` when non-null.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count,
                                 std::uint64_t seed,
                                 std::vector<int>* triangles = nullptr);

// `per_link` surface samples per meshed link, posed at joint vector q and
// labeled with the link index. Links without a mesh are skipped.
LabeledCloud sample_link_points(const RobotModel& robot,
                                std::span<const double> q,
                                std::size_t per_link = 2000,
                                std::uint64_t seed = 0);

struct RansacOptions {
  int trials = 64;  // source triplets tried
  double inlier_tol = 0.005;
  double early_stop = 0.95;  // inlier fraction that ends the search
  std::uint64_t seed = 0;
};

struct RansacResult {
  RigidTransform transform;
  std::size_t inliers = 0;
  double inlier_fraction = 0.0;
};

// Coarse registration of src onto dst without correspondences. Throws
// NumericalError when no hypothesis reaches 3 inliers.
RansacResult ransac_coarse_align(std::span<const Vec3> src,
                                 std::span<const Vec3> dst,
                                 const RansacOptions& opt = {});

struct IcpOptions {
  int max_iters = 100;
  double tol = 1e-10;       // RMS improvement that counts as converged
  double trim = 0.1;        // fraction of worst matches dropped
};

struct IcpResult {
  RigidTransform transform;
  double rms = 0.0;
  int iterations = 0;  // accepted updates
  bool stalled = false;
  std::vector<double> rms_trace;  // accepted iterates, starting with init
};

IcpResult icp_refine(std::span<const Vec3> src, std::span<const Vec3> dst,
                     const RigidTransform& init, const IcpOptions& opt = {});

// Labels every kernel with the link index of its nearest cloud point.
void segment_kernels_to_links(GaussianSet& kernels, const LabeledCloud& cloud);

// Channel-wise polynomial f(p) = sum_k f_k * p^k with element-wise powers.
struct ColorPolynomial {
  std::vector<Vec3> coefficients;  // f_0 .. f_d

  int degree() const { return static_cast<int>(coefficients.size()) - 1; }
  static ColorPolynomial identity(int degree = 2);
  Vec3 evaluate(const Vec3& p) const;  // unclamped
};

struct ColorFitOptions {
  int degree = 2;
  int iterations = 50;
  double tukey_c = 4.685;
  // Plain least squares with unit weights, kept for comparisons.
  bool robust = true;
};

struct ColorFit {
  ColorPolynomial poly;
  // Weighted squared residual per round, before and after the solve with
  // that round's weights (summed over channels).
  std::vector<double> objective_before;
  std::vector<double> objective_after;
};

// Fits q ~ f(p). `weights` multiply the brightness weights when given.
ColorFit fit_color_transform(std::span<const Vec3> p, std::span<const Vec3> q,
                             const ColorFitOptions& opt = {},
                             std::span<const double> weights = {});

// Evaluates and clamps to [0, 1].
std::vector<Vec3> apply_color_transform(const ColorPolynomial& poly,
                                        std::span<const Vec3> colors);
Vec3 apply_color_transform(const ColorPolynomial& poly, const Vec3& color);

void save_color_transform(const ColorPolynomial& poly,
                          const std::filesystem::path& path);
ColorPolynomial load_color_transform(const std::filesystem::path& path);

// Same-size rendered/captured image pairs flattened into (p, q) colour
// pairs; pixels are matched by position.
void append_pixel_pairs(const Image& rendered, const Image& captured,
                        std::vector<Vec3>& p, std::vector<Vec3>& q);

}  // namespace splatsim
