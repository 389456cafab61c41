#include "splatsim/alignment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <tuple>

#include <Eigen/QR>
#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"
#include "splatsim/random.hpp"
#include "splatsim/spatial.hpp"

namespace splatsim {

using nlohmann::json;

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, std::size_t count,
                                 std::uint64_t seed,
                                 std::vector<int>* triangles) {
  if (mesh.triangles.empty()) throw InvalidArgument("mesh has no triangles");
  std::vector<double> cumulative(mesh.triangles.size());
  double total = 0.0;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    total += mesh.triangle_area(t);
    cumulative[t] = total;
  }
  Rng rng(seed);
  std::vector<Vec3> out;
  out.reserve(count);
  if (triangles) triangles->clear();
  for (std::size_t s = 0; s < count; ++s) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    const auto t = static_cast<std::size_t>(it - cumulative.begin());
    const auto& tri = mesh.triangles[t];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.push_back((1.0 - r1) * mesh.vertices[tri[0]] +
                  r1 * (1.0 - r2) * mesh.vertices[tri[1]] +
                  r1 * r2 * mesh.vertices[tri[2]]);
    if (triangles) triangles->push_back(static_cast<int>(t));
  }
  return out;
}

LabeledCloud sample_link_points(const RobotModel& robot,
                                std::span<const double> q,
                                std::size_t per_link, std::uint64_t seed) {
  const auto poses = robot.forward_kinematics(q);
  LabeledCloud cloud;
  for (std::size_t l = 0; l < robot.links.size(); ++l) {
    if (!robot.links[l].has_mesh()) continue;
    const auto pts = sample_surface(robot.links[l].mesh, per_link,
                                    mix_seed(seed, l));
    for (const Vec3& p : pts) {
      cloud.points.push_back(poses[l].apply(p));
      cloud.labels.push_back(static_cast<int>(l));
    }
  }
  return cloud;
}

namespace {

std::size_t count_inliers(std::span<const Vec3> src, const KdTree& dst,
                          const RigidTransform& t, double tol) {
  const double tol2 = tol * tol;
  std::size_t n = 0;
  for (const Vec3& s : src)
    if (dst.nearest(t.apply(s)).second <= tol2) ++n;
  return n;
}

double diameter_estimate(std::span<const Vec3> pts) {
  Eigen::AlignedBox3d box;
  for (const Vec3& p : pts) box.extend(p);
  return box.diagonal().norm();
}

}  // namespace

RansacResult ransac_coarse_align(std::span<const Vec3> src,
                                 std::span<const Vec3> dst,
                                 const RansacOptions& opt) {
  if (src.size() < 3 || dst.size() < 3)
    throw InvalidArgument("registration needs at least 3 points per cloud");
  if (!(opt.inlier_tol > 0.0)) throw InvalidArgument("inlier_tol must be > 0");
  const double tol = opt.inlier_tol;
  const KdTree tree(std::vector<Vec3>(dst.begin(), dst.end()));

  // Destination pairs sorted by length, for compatible-edge lookup.
  struct Edge {
    double length;
    int a, b;
  };
  std::vector<Edge> edges;
  edges.reserve(dst.size() * (dst.size() - 1) / 2);
  for (std::size_t i = 0; i < dst.size(); ++i)
    for (std::size_t j = i + 1; j < dst.size(); ++j)
      edges.push_back({(dst[i] - dst[j]).norm(), static_cast<int>(i),
                       static_cast<int>(j)});
  std::sort(edges.begin(), edges.end(), [](const Edge& x, const Edge& y) {
    return std::tie(x.length, x.a, x.b) < std::tie(y.length, y.a, y.b);
  });

  const double min_edge = 0.25 * diameter_estimate(src);
  Rng rng(opt.seed);
  RansacResult best;
  bool found = false;

  for (int trial = 0; trial < opt.trials; ++trial) {
    // Spread-out, non-collinear source triplet plus a verification point.
    std::array<std::size_t, 4> pick{};
    bool ok = false;
    for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
      for (auto& p : pick) p = rng.index(src.size());
      const Vec3 &a = src[pick[0]], &b = src[pick[1]], &c = src[pick[2]];
      const double area = 0.5 * (b - a).cross(c - a).norm();
      ok = (a - b).norm() >= min_edge && (a - c).norm() >= min_edge &&
           (b - c).norm() >= min_edge && area >= 0.25 * min_edge * min_edge &&
           pick[3] != pick[0] && pick[3] != pick[1] && pick[3] != pick[2];
    }
    if (!ok) continue;
    const Vec3 &a = src[pick[0]], &b = src[pick[1]], &c = src[pick[2]];
    const Vec3& d = src[pick[3]];
    const double lab = (a - b).norm(), lac = (a - c).norm(),
                 lbc = (b - c).norm();
    const std::array<Vec3, 3> tri_src = {a, b, c};

    auto lo = std::lower_bound(
        edges.begin(), edges.end(), lab - tol,
        [](const Edge& e, double v) { return e.length < v; });
    for (auto it = lo; it != edges.end() && it->length <= lab + tol; ++it) {
      for (int flip = 0; flip < 2; ++flip) {
        const int ia = flip ? it->b : it->a;
        const int ib = flip ? it->a : it->b;
        for (std::size_t k = 0; k < dst.size(); ++k) {
          if (std::abs((dst[k] - dst[ia]).norm() - lac) > tol ||
              std::abs((dst[k] - dst[ib]).norm() - lbc) > tol)
            continue;
          const std::array<Vec3, 3> tri_dst = {dst[ia], dst[ib], dst[k]};
          const RigidTransform t = kabsch(tri_src, tri_dst);
          bool fits = true;
          for (int v = 0; v < 3 && fits; ++v)
            fits = (t.apply(tri_src[v]) - tri_dst[v]).norm() <= 2.0 * tol;
          if (!fits || tree.nearest(t.apply(d)).second > tol * tol) continue;
          const std::size_t n = count_inliers(src, tree, t, tol);
          if (!found || n > best.inliers) {
            found = true;
            best.transform = t;
            best.inliers = n;
          }
        }
      }
    }
    if (found && static_cast<double>(best.inliers) >=
                     opt.early_stop * static_cast<double>(src.size()))
      break;
  }
  if (!found || best.inliers < 3)
    throw NumericalError(
        "RANSAC found no consistent hypothesis; provide a coarse initial "
        "transform and use ICP directly");

  // Least-squares polish on the inlier correspondences.
  std::vector<Vec3> ms, md;
  for (const Vec3& s : src) {
    const auto [j, d2] = tree.nearest(best.transform.apply(s));
    if (d2 <= tol * tol) {
      ms.push_back(s);
      md.push_back(dst[j]);
    }
  }
  const RigidTransform polished = kabsch(ms, md);
  const std::size_t n = count_inliers(src, tree, polished, tol);
  if (n >= best.inliers) {
    best.transform = polished;
    best.inliers = n;
  }
  best.inlier_fraction =
      static_cast<double>(best.inliers) / static_cast<double>(src.size());
  return best;
}

namespace {

struct Matches {
  std::vector<Vec3> src;
  std::vector<Vec3> dst;
  double rms = 0.0;
};

Matches trimmed_matches(std::span<const Vec3> src, const KdTree& tree,
                        const RigidTransform& t, double trim) {
  std::vector<std::pair<double, int>> d2(src.size());
  std::vector<int> nn(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto [j, dist2] = tree.nearest(t.apply(src[i]));
    d2[i] = {dist2, static_cast<int>(i)};
    nn[i] = j;
  }
  std::sort(d2.begin(), d2.end());
  const auto keep = std::max<std::size_t>(
      3, static_cast<std::size_t>(std::ceil((1.0 - trim) * src.size())));
  Matches m;
  double sum = 0.0;
  for (std::size_t k = 0; k < std::min(keep, d2.size()); ++k) {
    const int i = d2[k].second;
    m.src.push_back(src[i]);
    m.dst.push_back(tree.points()[nn[i]]);
    sum += d2[k].first;
  }
  m.rms = std::sqrt(sum / static_cast<double>(m.src.size()));
  return m;
}

}  // namespace

IcpResult icp_refine(std::span<const Vec3> src, std::span<const Vec3> dst,
                     const RigidTransform& init, const IcpOptions& opt) {
  if (src.size() < 3 || dst.size() < 3)
    throw InvalidArgument("ICP needs at least 3 points per cloud");
  const KdTree tree(std::vector<Vec3>(dst.begin(), dst.end()));
  IcpResult out;
  out.transform = init;
  Matches cur = trimmed_matches(src, tree, init, opt.trim);
  out.rms = cur.rms;
  out.rms_trace.push_back(cur.rms);
  int stall = 0;
  for (int it = 0; it < opt.max_iters; ++it) {
    const RigidTransform next = kabsch(cur.src, cur.dst);
    Matches m = trimmed_matches(src, tree, next, opt.trim);
    if (m.rms < out.rms) {
      const double gain = out.rms - m.rms;
      out.transform = next;
      out.rms = m.rms;
      out.rms_trace.push_back(m.rms);
      ++out.iterations;
      stall = 0;
      cur = std::move(m);
      if (gain < opt.tol) break;
    } else {
      if (m.rms <= out.rms + opt.tol) break;  // fixed point
      cur = std::move(m);
      if (++stall >= 5) {
        out.stalled = true;
        break;
      }
    }
  }
  return out;
}

void segment_kernels_to_links(GaussianSet& kernels, const LabeledCloud& cloud) {
  if (cloud.points.empty()) throw InvalidArgument("labeled cloud is empty");
  if (cloud.points.size() != cloud.labels.size())
    throw InvalidArgument("labeled cloud has mismatched label count");
  const KdTree tree(cloud.points);
  for (GaussianKernel& k : kernels.kernels)
    k.label = cloud.labels[tree.nearest(k.position).first];
}

ColorPolynomial ColorPolynomial::identity(int degree) {
  if (degree < 1) throw InvalidArgument("colour polynomial degree must be >= 1");
  ColorPolynomial p;
  p.coefficients.assign(static_cast<std::size_t>(degree) + 1, Vec3::Zero());
  p.coefficients[1] = Vec3::Ones();
  return p;
}

Vec3 ColorPolynomial::evaluate(const Vec3& p) const {
  Vec3 out = Vec3::Zero();
  Vec3 power = Vec3::Ones();
  for (const Vec3& f : coefficients) {
    out += f.cwiseProduct(power);
    power = power.cwiseProduct(p);
  }
  return out;
}

namespace {

constexpr std::array<const char*, 3> kChannel = {"red", "green", "blue"};

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid),
                   v.end());
  const double hi = v[mid];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(
      v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

Eigen::VectorXd weighted_solve(const Eigen::MatrixXd& a,
                               const Eigen::VectorXd& y,
                               const Eigen::VectorXd& w, int channel) {
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd aw = sw.asDiagonal() * a;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(aw);
  qr.setThreshold(1e-10);
  if (qr.rank() < a.cols())
    throw NumericalError(std::string("colour fit is rank deficient in the ") +
                         kChannel[channel] + " channel");
  return qr.solve(sw.cwiseProduct(y));
}

}  // namespace

ColorFit fit_color_transform(std::span<const Vec3> p, std::span<const Vec3> q,
                             const ColorFitOptions& opt,
                             std::span<const double> weights) {
  if (p.size() != q.size())
    throw InvalidArgument("colour pair lists differ in length");
  if (!weights.empty() && weights.size() != p.size())
    throw InvalidArgument("colour pair weights differ in length");
  if (opt.degree < 1) throw InvalidArgument("colour polynomial degree must be >= 1");
  const auto n = static_cast<Eigen::Index>(p.size());
  const int terms = opt.degree + 1;
  if (n < terms) throw InvalidArgument("too few colour pairs for the degree");

  Eigen::VectorXd base(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double extra = weights.empty() ? 1.0 : weights[i];
    if (!std::isfinite(extra) || extra < 0.0)
      throw InvalidArgument("colour pair weights must be finite and >= 0");
    base(i) = opt.robust ? q[i].norm() * extra : extra;
  }

  ColorFit fit;
  fit.poly.coefficients.assign(static_cast<std::size_t>(terms), Vec3::Zero());
  const int rounds = opt.robust ? opt.iterations : 0;
  fit.objective_before.assign(static_cast<std::size_t>(rounds), 0.0);
  fit.objective_after.assign(static_cast<std::size_t>(rounds), 0.0);

  for (int ch = 0; ch < 3; ++ch) {
    Eigen::MatrixXd a(n, terms);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      double pw = 1.0;
      for (int k = 0; k < terms; ++k) {
        a(i, k) = pw;
        pw *= p[i](ch);
      }
      y(i) = q[i](ch);
    }
    Eigen::VectorXd coef = weighted_solve(a, y, base, ch);
    for (int r = 0; r < rounds; ++r) {
      const Eigen::VectorXd res = y - a * coef;
      std::vector<double> rv(res.data(), res.data() + n);
      const double med = median_of(rv);
      for (double& v : rv) v = std::abs(v - med);
      const double scale = std::max(1.4826 * median_of(rv), 1e-12);
      Eigen::VectorXd w(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const double u = res(i) / (opt.tukey_c * scale);
        const double t = std::abs(u) < 1.0 ? (1.0 - u * u) * (1.0 - u * u) : 0.0;
        w(i) = base(i) * t;
      }
      fit.objective_before[r] += w.dot(res.cwiseProduct(res));
      coef = weighted_solve(a, y, w, ch);
      const Eigen::VectorXd res2 = y - a * coef;
      fit.objective_after[r] += w.dot(res2.cwiseProduct(res2));
    }
    for (int k = 0; k < terms; ++k) fit.poly.coefficients[k](ch) = coef(k);
  }
  return fit;
}

Vec3 apply_color_transform(const ColorPolynomial& poly, const Vec3& color) {
  return poly.evaluate(color).cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<Vec3> apply_color_transform(const ColorPolynomial& poly,
                                        std::span<const Vec3> colors) {
  std::vector<Vec3> out;
  out.reserve(colors.size());
  for (const Vec3& c : colors) out.push_back(apply_color_transform(poly, c));
  return out;
}

void save_color_transform(const ColorPolynomial& poly,
                          const std::filesystem::path& path) {
  json j;
  j["degree"] = poly.degree();
  j["coefficients"] = json::array();
  for (const Vec3& f : poly.coefficients)
    j["coefficients"].push_back({f.x(), f.y(), f.z()});
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

ColorPolynomial load_color_transform(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  if (!j.contains("coefficients"))
    throw SchemaError(path.string() + ": missing field 'coefficients'");
  ColorPolynomial poly;
  for (const auto& c : j.at("coefficients")) {
    const Vec3 f(c.at(0).get<double>(), c.at(1).get<double>(),
                 c.at(2).get<double>());
    if (!f.allFinite()) throw ParseError(path.string() + ": non-finite coefficient");
    poly.coefficients.push_back(f);
  }
  if (poly.degree() < 1)
    throw SchemaError(path.string() + ": colour polynomial needs degree >= 1");
  if (j.contains("degree") && j.at("degree").get<int>() != poly.degree())
    throw SchemaError(path.string() + ": degree disagrees with coefficients");
  return poly;
}

void append_pixel_pairs(const Image& rendered, const Image& captured,
                        std::vector<Vec3>& p, std::vector<Vec3>& q) {
  if (rendered.width != captured.width || rendered.height != captured.height)
    throw InvalidArgument("paired images differ in size");
  p.insert(p.end(), rendered.rgb.begin(), rendered.rgb.end());
  q.insert(q.end(), captured.rgb.begin(), captured.rgb.end());
}

}  // namespace splatsim
