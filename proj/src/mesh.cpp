#include "splatsim/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <utility>

#include "splatsim/error.hpp"

namespace splatsim {

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    for (int idx : triangles[t]) {
      if (idx < 0 || idx >= n) {
        throw ParseError("mesh '" + name + "': triangle " + std::to_string(t) +
                         " index " + std::to_string(idx) + " out of range");
      }
    }
    if (triangle_area(t) < kMinTriangleArea) {
      throw ParseError("mesh '" + name + "': degenerate triangle " +
                       std::to_string(t));
    }
  }
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (!vertices[i].allFinite()) {
      throw ParseError("mesh '" + name + "': non-finite vertex " +
                       std::to_string(i));
    }
  }
}

double TriangleMesh::triangle_area(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3& a = vertices[tri[0]];
  return 0.5 * (vertices[tri[1]] - a).cross(vertices[tri[2]] - a).norm();
}

Vec3 TriangleMesh::triangle_normal(std::size_t t) const {
  const auto& tri = triangles[t];
  const Vec3& a = vertices[tri[0]];
  return (vertices[tri[1]] - a).cross(vertices[tri[2]] - a).normalized();
}

Eigen::AlignedBox3d TriangleMesh::bounds() const {
  Eigen::AlignedBox3d box;
  for (const Vec3& v : vertices) box.extend(v);
  return box;
}

TriangleMesh TriangleMesh::transformed(const RigidTransform& t) const {
  TriangleMesh out = *this;
  for (Vec3& v : out.vertices) v = t.apply(v);
  return out;
}

TriangleMesh parse_mesh_obj(const std::string& text, const std::string& name) {
  TriangleMesh mesh;
  mesh.name = name;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw ParseError(name + ":" + std::to_string(line_no) +
                         ": malformed vertex record");
      }
      if (!v.allFinite()) {
        throw ParseError(name + ":" + std::to_string(line_no) +
                         ": non-finite vertex");
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string token;
      while (ls >> token) {
        // Accept v, v/vt, v//vn, v/vt/vn.
        const std::string head = token.substr(0, token.find('/'));
        int idx = 0;
        try {
          std::size_t used = 0;
          idx = std::stoi(head, &used);
          if (used != head.size()) throw std::invalid_argument(head);
        } catch (const std::exception&) {
          throw ParseError(name + ":" + std::to_string(line_no) +
                           ": bad face index '" + token + "'");
        }
        const int n = static_cast<int>(mesh.vertices.size());
        const int resolved = idx > 0 ? idx - 1 : n + idx;
        if (idx == 0 || resolved < 0 || resolved >= n) {
          throw ParseError(name + ":" + std::to_string(line_no) +
                           ": face index " + std::to_string(idx) +
                           " out of range (" + std::to_string(n) +
                           " vertices defined)");
        }
        poly.push_back(resolved);
      }
      if (poly.size() < 3) {
        throw ParseError(name + ":" + std::to_string(line_no) +
                         ": face with fewer than 3 vertices");
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
      }
    }
  }
  mesh.validate();
  return mesh;
}

TriangleMesh load_mesh_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open OBJ file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_mesh_obj(buf.str(), path.stem().string());
}

void save_mesh_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write OBJ file: " + path.string());
  out.precision(17);
  out << "# " << mesh.name << "\n";
  for (const Vec3& v : mesh.vertices) {
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  }
  for (const auto& t : mesh.triangles) {
    out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
}

TriangleMesh make_box_mesh(const Vec3& half_extents, const Vec3& center,
                           const std::string& name) {
  TriangleMesh m;
  m.name = name;
  for (int i = 0; i < 8; ++i) {
    const Vec3 s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0,
                 (i & 4) ? 1.0 : -1.0);
    m.vertices.push_back(center + s.cwiseProduct(half_extents));
  }
  m.triangles = {{0, 2, 3}, {0, 3, 1},   // -z
                 {4, 5, 7}, {4, 7, 6},   // +z
                 {0, 1, 5}, {0, 5, 4},   // -y
                 {2, 6, 7}, {2, 7, 3},   // +y
                 {0, 4, 6}, {0, 6, 2},   // -x
                 {1, 3, 7}, {1, 7, 5}};  // +x
  return m;
}

namespace {

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return a.x() * b.y() - a.y() * b.x();
}

bool point_in_triangle_2d(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                          const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return cross2(b - a, p - a) >= 0.0 && cross2(c - b, p - b) >= 0.0 &&
         cross2(a - c, p - c) >= 0.0;
}

// Ear clipping for a simple counter-clockwise polygon.
std::vector<std::array<int, 3>> triangulate_polygon(
    std::span<const Eigen::Vector2d> poly) {
  std::vector<int> idx(poly.size());
  for (std::size_t i = 0; i < poly.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<std::array<int, 3>> out;
  std::size_t guard = 0;
  while (idx.size() > 3 && guard < 10 * poly.size() * poly.size()) {
    ++guard;
    bool clipped = false;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const int ia = idx[(k + idx.size() - 1) % idx.size()];
      const int ib = idx[k];
      const int ic = idx[(k + 1) % idx.size()];
      const auto& a = poly[ia];
      const auto& b = poly[ib];
      const auto& c = poly[ic];
      if (cross2(b - a, c - b) <= 0.0) continue;  // reflex
      bool contains = false;
      for (int other : idx) {
        if (other == ia || other == ib || other == ic) continue;
        if (point_in_triangle_2d(poly[other], a, b, c)) {
          contains = true;
          break;
        }
      }
      if (contains) continue;
      out.push_back({ia, ib, ic});
      idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(k));
      clipped = true;
      break;
    }
    if (!clipped) throw InvalidArgument("polygon is not simple or not CCW");
  }
  if (idx.size() == 3) out.push_back({idx[0], idx[1], idx[2]});
  return out;
}

}  // namespace

TriangleMesh make_prism_mesh(std::span<const Eigen::Vector2d> polygon,
                             double z0, double z1, const std::string& name) {
  if (polygon.size() < 3 || z1 <= z0) {
    throw InvalidArgument("make_prism_mesh: need >= 3 vertices and z1 > z0");
  }
  TriangleMesh m;
  m.name = name;
  const int n = static_cast<int>(polygon.size());
  for (const auto& p : polygon) m.vertices.emplace_back(p.x(), p.y(), z0);
  for (const auto& p : polygon) m.vertices.emplace_back(p.x(), p.y(), z1);
  for (const auto& t : triangulate_polygon(polygon)) {
    m.triangles.push_back({t[0], t[2], t[1]});          // bottom faces -z
    m.triangles.push_back({t[0] + n, t[1] + n, t[2] + n});  // top faces +z
  }
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.triangles.push_back({i, j, j + n});
    m.triangles.push_back({i, j + n, i + n});
  }
  return m;
}

double mesh_volume(const TriangleMesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    v += mesh.vertices[t[0]].dot(
        mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return v / 6.0;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                               const Vec3& c, int* feature) {
  auto set = [&](int f) {
    if (feature != nullptr) *feature = f;
  };
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    set(4);
    return a;
  }
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    set(5);
    return b;
  }
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    set(1);
    return a + (d1 / (d1 - d3)) * ab;
  }
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    set(6);
    return c;
  }
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    set(3);
    return a + (d2 / (d2 - d6)) * ac;
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    set(2);
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  set(0);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

MeshDistanceField::MeshDistanceField(TriangleMesh mesh)
    : mesh_(std::move(mesh)), bounds_(mesh_.bounds()) {
  const std::size_t nt = mesh_.triangles.size();
  face_normals_.resize(nt);
  vertex_normals_.assign(mesh_.vertices.size(), Vec3::Zero());
  edge_normals_.resize(nt);
  std::map<std::pair<int, int>, Vec3> edge_sum;
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh_.triangles[t];
    const Vec3 n = mesh_.triangle_normal(t);
    face_normals_[t] = n;
    for (int k = 0; k < 3; ++k) {
      const Vec3& v0 = mesh_.vertices[tri[k]];
      const Vec3& v1 = mesh_.vertices[tri[(k + 1) % 3]];
      const Vec3& v2 = mesh_.vertices[tri[(k + 2) % 3]];
      const double angle = std::acos(
          std::clamp((v1 - v0).normalized().dot((v2 - v0).normalized()), -1.0,
                     1.0));
      vertex_normals_[tri[k]] += angle * n;
      const int e0 = std::min(tri[k], tri[(k + 1) % 3]);
      const int e1 = std::max(tri[k], tri[(k + 1) % 3]);
      auto it = edge_sum.try_emplace({e0, e1}, Vec3::Zero()).first;
      it->second += n;
    }
  }
  for (Vec3& n : vertex_normals_) {
    if (n.squaredNorm() > 0.0) n.normalize();
  }
  for (std::size_t t = 0; t < nt; ++t) {
    const auto& tri = mesh_.triangles[t];
    for (int k = 0; k < 3; ++k) {
      const int e0 = std::min(tri[k], tri[(k + 1) % 3]);
      const int e1 = std::max(tri[k], tri[(k + 1) % 3]);
      edge_normals_[t][k] = edge_sum.at({e0, e1}).normalized();
    }
  }
}

ClosestPoint MeshDistanceField::query(const Vec3& p) const {
  ClosestPoint best;
  double best_d2 = std::numeric_limits<double>::infinity();
  int best_feature = 0;
  for (std::size_t t = 0; t < mesh_.triangles.size(); ++t) {
    const auto& tri = mesh_.triangles[t];
    int feature = 0;
    const Vec3 c =
        closest_point_on_triangle(p, mesh_.vertices[tri[0]],
                                  mesh_.vertices[tri[1]],
                                  mesh_.vertices[tri[2]], &feature);
    const double d2 = (p - c).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best.point = c;
      best.triangle = t;
      best_feature = feature;
    }
  }
  const auto& tri = mesh_.triangles[best.triangle];
  Vec3 pseudo;
  switch (best_feature) {
    case 0: pseudo = face_normals_[best.triangle]; break;
    case 1: pseudo = edge_normals_[best.triangle][0]; break;
    case 2: pseudo = edge_normals_[best.triangle][1]; break;
    case 3: pseudo = edge_normals_[best.triangle][2]; break;
    case 4: pseudo = vertex_normals_[tri[0]]; break;
    case 5: pseudo = vertex_normals_[tri[1]]; break;
    default: pseudo = vertex_normals_[tri[2]]; break;
  }
  const Vec3 diff = p - best.point;
  const double dist = std::sqrt(best_d2);
  const bool outside = diff.dot(pseudo) >= 0.0;
  best.signed_distance = outside ? dist : -dist;
  if (dist > 1e-12) {
    best.normal = outside ? Vec3(diff / dist) : Vec3(-diff / dist);
  } else {
    best.normal = face_normals_[best.triangle];
  }
  return best;
}

bool MeshDistanceField::inside(const Vec3& p) const {
  double omega = 0.0;
  for (const auto& tri : mesh_.triangles) {
    const Vec3 a = mesh_.vertices[tri[0]] - p;
    const Vec3 b = mesh_.vertices[tri[1]] - p;
    const Vec3 c = mesh_.vertices[tri[2]] - p;
    const double la = a.norm();
    const double lb = b.norm();
    const double lc = c.norm();
    const double num = a.dot(b.cross(c));
    const double den = la * lb * lc + a.dot(b) * lc + b.dot(c) * la +
                       c.dot(a) * lb;
    omega += 2.0 * std::atan2(num, den);
  }
  return omega / (4.0 * std::numbers::pi) > 0.5;
}

}  // namespace splatsim
