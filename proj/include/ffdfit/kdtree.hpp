#pragma once

#include "ffdfit/geometry.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace ffdfit {

// Exact 3D k-d tree with median splits. Queries return the nearest point by
// squared Euclidean distance; equal distances resolve to the lowest index.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index;
    double distance_squared;
  };

  explicit KdTree(std::span<const Vec3> points);

  Neighbor nearest(const Vec3& query) const;
  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range in entries_
    int axis;                // -1 for leaves
    double split;
    std::size_t left, right;
  };

  std::size_t build(std::size_t begin, std::size_t end);
  void search(std::size_t node, const Vec3& q, double lower_bound, Vec3& offset, Neighbor& best) const;

  std::span<const Vec3> points_;
  struct Entry {
    Vec3 point;
    std::size_t index;
  };
  std::vector<Entry> entries_;  // points in tree order
  std::vector<Node> nodes_;
};

}  // namespace ffdfit
