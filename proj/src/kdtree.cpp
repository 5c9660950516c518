#include "ffdfit/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace ffdfit {
namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points) {
  if (points.empty()) throw std::invalid_argument("k-d tree over an empty point set");
  entries_.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) entries_[i] = {points[i], i};
  nodes_.reserve(2 * points.size() / kLeafSize + 1);
  build(0, entries_.size());
}

std::size_t KdTree::build(std::size_t begin, std::size_t end) {
  const std::size_t id = nodes_.size();
  nodes_.push_back({begin, end, -1, 0.0, 0, 0});
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = entries_[begin].point, hi = lo;
  for (std::size_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(entries_[i].point);
    hi = hi.cwiseMax(entries_[i].point);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(entries_.begin() + static_cast<std::ptrdiff_t>(begin),
                   entries_.begin() + static_cast<std::ptrdiff_t>(mid),
                   entries_.begin() + static_cast<std::ptrdiff_t>(end),
                   [axis](const Entry& a, const Entry& b) { return a.point[axis] < b.point[axis]; });
  const double split = entries_[mid].point[axis];
  const std::size_t left = build(begin, mid);
  const std::size_t right = build(mid, end);
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

KdTree::Neighbor KdTree::nearest(const Vec3& query) const {
  Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
  Vec3 offset = Vec3::Zero();
  search(0, query, 0.0, offset, best);
  return best;
}

// `lower_bound` is the squared distance from q to the node's cell, built up one axis at a
// time from `offset` (per-axis gap to the cell).
void KdTree::search(std::size_t id, const Vec3& q, double lower_bound, Vec3& offset, Neighbor& best) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const Entry& e = entries_[i];
      const double d2 = (e.point - q).squaredNorm();
      if (d2 < best.distance_squared || (d2 == best.distance_squared && e.index < best.index)) {
        best = {e.index, d2};
      }
    }
    return;
  }
  // Left holds coordinates <= split, right holds >= split.
  const double diff = q[node.axis] - node.split;
  const std::size_t near = diff <= 0.0 ? node.left : node.right;
  const std::size_t far = diff <= 0.0 ? node.right : node.left;
  search(near, q, lower_bound, offset, best);
  const double old = offset[node.axis];
  const double far_bound = lower_bound - old * old + diff * diff;
  // <= keeps equal-distance candidates on the far side reachable for the index tie-break.
  if (far_bound <= best.distance_squared) {
    offset[node.axis] = diff;
    search(far, q, far_bound, offset, best);
    offset[node.axis] = old;
  }
}

}  // namespace ffdfit
