#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "splatsim/geometry.hpp"

namespace splatsim {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::string name;

  // Throws ParseError on out-of-range indices or degenerate triangles.
  void validate() const;

  double triangle_area(std::size_t t) const;
  Vec3 triangle_normal(std::size_t t) const;  // unit, right-hand winding
  Eigen::AlignedBox3d bounds() const;
  TriangleMesh transformed(const RigidTransform& t) const;
};

inline constexpr double kMinTriangleArea = 1e-12;  // m^2

// ASCII OBJ, `v` and `f` records only. Polygons are fan-triangulated;
// negative (relative) indices are accepted.
TriangleMesh load_mesh_obj(const std::filesystem::path& path);
TriangleMesh parse_mesh_obj(const std::string& text, const std::string& name);
void save_mesh_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

// Axis-aligned box mesh with outward winding, 8 vertices / 12 triangles.
TriangleMesh make_box_mesh(const Vec3& half_extents,
                           const Vec3& center = Vec3::Zero(),
                           const std::string& name = "box");
// Closed prism over a simple counter-clockwise polygon in the xy plane,
// spanning z in [z0, z1].
TriangleMesh make_prism_mesh(std::span<const Eigen::Vector2d> polygon,
                             double z0, double z1,
                             const std::string& name = "prism");

// Signed volume by the divergence theorem; positive for outward winding.
double mesh_volume(const TriangleMesh& mesh);

struct ClosestPoint {
  Vec3 point;
  Vec3 normal;  // unit, pointing from the surface toward the query side
  double signed_distance = 0.0;  // negative inside a closed mesh
  std::size_t triangle = 0;
};

// Closest-point and signed-distance queries. The sign comes from
// angle-weighted pseudo-normals, which is exact for closed meshes; for open
// meshes it reports the side relative to the nearest surface normal.
class MeshDistanceField {
 public:
  explicit MeshDistanceField(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  const Eigen::AlignedBox3d& bounds() const { return bounds_; }

  ClosestPoint query(const Vec3& p) const;
  // Generalized winding number test; robust for closed meshes.
  bool inside(const Vec3& p) const;

 private:
  TriangleMesh mesh_;
  Eigen::AlignedBox3d bounds_;
  std::vector<Vec3> face_normals_;
  std::vector<Vec3> vertex_normals_;
  std::vector<std::array<Vec3, 3>> edge_normals_;  // per triangle edge
};

// Point on triangle closest to p, with the barycentric feature it lies on
// (0: face interior, 1..3: edge ab/bc/ca, 4..6: vertex a/b/c).
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c, int* feature = nullptr);

}  // namespace splatsim
