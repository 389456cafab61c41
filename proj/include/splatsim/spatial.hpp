#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "splatsim/geometry.hpp"

namespace splatsim {

// Uniform grid over a fixed point set. Points are bucketed by integer cell
// coordinates; buckets are sorted so enumeration order is deterministic.
class UniformGrid {
 public:
  UniformGrid(std::span<const Vec3> points, double cell_size);

  double cell_size() const { return cell_; }

  // Calls fn(j) for every point j whose cell is within one cell of p's
  // cell (the 27-cell neighborhood), in ascending cell-key then index order.
  template <typename Fn>
  void for_each_near(const Vec3& p, Fn&& fn) const {
    const auto c = cell_of(p);
    for (int dz = -1; dz <= 1; ++dz) {
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const auto range = bucket(key(c[0] + dx, c[1] + dy, c[2] + dz));
          for (std::size_t k = range.first; k < range.second; ++k) {
            fn(order_[k]);
          }
        }
      }
    }
  }

  // All unordered pairs (i < j) closer than `radius` (must be <= cell
  // size), sorted lexicographically.
  std::vector<std::pair<int, int>> pairs_within(double radius) const;

 private:
  std::array<std::int64_t, 3> cell_of(const Vec3& p) const;
  static std::uint64_t key(std::int64_t x, std::int64_t y, std::int64_t z);
  std::pair<std::size_t, std::size_t> bucket(std::uint64_t k) const;

  std::span<const Vec3> points_;
  double cell_;
  std::vector<std::uint64_t> keys_;  // sorted cell keys, one per point
  std::vector<int> order_;           // point indices in key order
};

// Static 3-D tree for nearest-neighbor queries. Ties are broken toward the
// smaller point index so results match a brute-force scan.
class KdTree {
 public:
  explicit KdTree(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const std::vector<Vec3>& points() const { return points_; }

  // Index of the nearest point and its squared distance.
  std::pair<int, double> nearest(const Vec3& q) const;
  // k nearest points ordered by (distance, index).
  std::vector<std::pair<int, double>> knn(const Vec3& q, std::size_t k) const;
  // Indices of all points within radius, ascending index order.
  std::vector<int> radius_search(const Vec3& q, double radius) const;

 private:
  struct Node {
    int point;
    int axis;
    int left = -1;
    int right = -1;
  };
  int build(std::vector<int>& idx, std::size_t lo, std::size_t hi, int depth);
  template <typename Visit>
  void search(int node, const Vec3& q, double& bound, Visit&& visit) const;

  std::vector<Vec3> points_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace splatsim
