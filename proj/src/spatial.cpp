#include "splatsim/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "splatsim/error.hpp"

namespace splatsim {

UniformGrid::UniformGrid(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_(cell_size) {
  if (!(cell_size > 0.0)) throw InvalidArgument("UniformGrid: cell size must be > 0");
  const std::size_t n = points.size();
  std::vector<std::uint64_t> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(points[i]);
    raw[i] = key(c[0], c[1], c[2]);
  }
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  std::sort(order_.begin(), order_.end(), [&](int a, int b) {
    return raw[a] != raw[b] ? raw[a] < raw[b] : a < b;
  });
  keys_.resize(n);
  for (std::size_t k = 0; k < n; ++k) keys_[k] = raw[order_[k]];
}

std::array<std::int64_t, 3> UniformGrid::cell_of(const Vec3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_)),
          static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::uint64_t UniformGrid::key(std::int64_t x, std::int64_t y, std::int64_t z) {
  // 21 bits per axis with an offset; desk-scale scenes never approach the
  // limit (2^20 cells per side).
  constexpr std::int64_t kOffset = 1 << 20;
  constexpr std::uint64_t kMask = (1u << 21) - 1;
  const auto ux = static_cast<std::uint64_t>(x + kOffset) & kMask;
  const auto uy = static_cast<std::uint64_t>(y + kOffset) & kMask;
  const auto uz = static_cast<std::uint64_t>(z + kOffset) & kMask;
  return (uz << 42) | (uy << 21) | ux;
}

std::pair<std::size_t, std::size_t> UniformGrid::bucket(std::uint64_t k) const {
  const auto lo = std::lower_bound(keys_.begin(), keys_.end(), k);
  const auto hi = std::upper_bound(lo, keys_.end(), k);
  return {static_cast<std::size_t>(lo - keys_.begin()),
          static_cast<std::size_t>(hi - keys_.begin())};
}

std::vector<std::pair<int, int>> UniformGrid::pairs_within(double radius) const {
  if (radius > cell_) throw InvalidArgument("pairs_within: radius exceeds cell size");
  const double r2 = radius * radius;
  std::vector<std::pair<int, int>> out;
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const Vec3& p = points_[i];
    for_each_near(p, [&](int j) {
      if (j <= static_cast<int>(i)) return;
      if ((points_[j] - p).squaredNorm() < r2) {
        out.emplace_back(static_cast<int>(i), j);
      }
    });
  }
  std::sort(out.begin(), out.end());
  return out;
}

KdTree::KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
  std::vector<int> idx(points_.size());
  std::iota(idx.begin(), idx.end(), 0);
  nodes_.reserve(points_.size());
  root_ = build(idx, 0, idx.size(), 0);
}

int KdTree::build(std::vector<int>& idx, std::size_t lo, std::size_t hi,
                  int depth) {
  if (lo >= hi) return -1;
  // Split on the widest axis of this subset.
  Eigen::AlignedBox3d box;
  for (std::size_t k = lo; k < hi; ++k) box.extend(points_[idx[k]]);
  int axis = 0;
  box.sizes().maxCoeff(&axis);
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                   idx.begin() + static_cast<std::ptrdiff_t>(mid),
                   idx.begin() + static_cast<std::ptrdiff_t>(hi),
                   [&](int a, int b) {
                     const double va = points_[a][axis];
                     const double vb = points_[b][axis];
                     return va != vb ? va < vb : a < b;
                   });
  const int node = static_cast<int>(nodes_.size());
  nodes_.push_back({idx[mid], axis});
  const int left = build(idx, lo, mid, depth + 1);
  const int right = build(idx, mid + 1, hi, depth + 1);
  nodes_[node].left = left;
  nodes_[node].right = right;
  return node;
}

template <typename Visit>
void KdTree::search(int node, const Vec3& q, double& bound,
                    Visit&& visit) const {
  if (node < 0) return;
  const Node& n = nodes_[node];
  const Vec3& p = points_[n.point];
  visit(n.point, (p - q).squaredNorm());
  const double diff = q[n.axis] - p[n.axis];
  const int near = diff <= 0.0 ? n.left : n.right;
  const int far = diff <= 0.0 ? n.right : n.left;
  search(near, q, bound, visit);
  // <= keeps equal-distance candidates reachable for index tie-breaking.
  if (diff * diff <= bound) search(far, q, bound, visit);
}

std::pair<int, double> KdTree::nearest(const Vec3& q) const {
  int best = -1;
  double bound = std::numeric_limits<double>::infinity();
  search(root_, q, bound, [&](int i, double d2) {
    if (d2 < bound || (d2 == bound && i < best)) {
      bound = d2;
      best = i;
    }
  });
  return {best, bound};
}

std::vector<std::pair<int, double>> KdTree::knn(const Vec3& q,
                                                std::size_t k) const {
  k = std::min(k, points_.size());
  if (k == 0) return {};
  auto worse = [](const std::pair<double, int>& a,
                  const std::pair<double, int>& b) { return a < b; };
  std::priority_queue<std::pair<double, int>,
                      std::vector<std::pair<double, int>>, decltype(worse)>
      heap(worse);
  double bound = std::numeric_limits<double>::infinity();
  search(root_, q, bound, [&](int i, double d2) {
    const std::pair<double, int> cand{d2, i};
    if (heap.size() < k) {
      heap.push(cand);
    } else if (cand < heap.top()) {
      heap.pop();
      heap.push(cand);
    } else {
      return;
    }
    if (heap.size() == k) bound = heap.top().first;
  });
  std::vector<std::pair<int, double>> out;
  out.reserve(k);
  while (!heap.empty()) {
    out.emplace_back(heap.top().second, heap.top().first);
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<int> KdTree::radius_search(const Vec3& q, double radius) const {
  std::vector<int> out;
  double bound = radius * radius;
  const double r2 = bound;
  search(root_, q, bound, [&](int i, double d2) {
    if (d2 <= r2) out.push_back(i);
  });
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace splatsim
