#pragma once

#include "ffdfit/geometry.hpp"

#include <cstddef>
#include <vector>

namespace ffdfit {

// Chamfer distance split into its two directed sums of squared
// nearest-neighbour distances.
struct ChamferValue {
  double forward = 0.0;   // sum over S1 of min over S2
  double backward = 0.0;  // sum over S2 of min over S1
  std::size_t size1 = 0;
  std::size_t size2 = 0;

  double sum() const { return forward + backward; }
  // Each direction divided by its own point count.
  double average() const {
    return forward / static_cast<double>(size1) + backward / static_cast<double>(size2);
  }
  // Total divided by the combined point count.
  double average_combined() const { return sum() / static_cast<double>(size1 + size2); }
};

// Brute-force O(|S1||S2|) evaluation.
ChamferValue chamfer(const PointCloud& s1, const PointCloud& s2);
// Same value through a k-d tree.
ChamferValue chamfer_fast(const PointCloud& s1, const PointCloud& s2);

// Gradient of the Chamfer sum with respect to the points of S1.
std::vector<Vec3> chamfer_grad(const PointCloud& s1, const PointCloud& s2);

class KdTree;

struct ChamferWithGrad {
  ChamferValue value;
  std::vector<Vec3> grad;  // on S1
};

// Value and S1-gradient in one pass; `s2_tree` must index `s2`.
ChamferWithGrad chamfer_with_grad(const PointCloud& s1, const PointCloud& s2, const KdTree& s2_tree);

// Bijection S1 -> S2: mapping[i] is the S2 index paired with S1 point i.
struct Assignment {
  std::vector<std::size_t> mapping;
  double cost = 0.0;
};

// Sum of Euclidean distances under `mapping`.
double assignment_cost(const PointCloud& s1, const PointCloud& s2,
                       const std::vector<std::size_t>& mapping);
bool is_bijection(const std::vector<std::size_t>& mapping, std::size_t n);

// Minimum-cost bijection on equal-size clouds (Hungarian method, O(n^3)).
Assignment emd_exact(const PointCloud& s1, const PointCloud& s2);

// Exhaustive search over all n! bijections; n <= 8.
Assignment emd_bruteforce(const PointCloud& s1, const PointCloud& s2);
inline constexpr std::size_t kBruteForceEmdLimit = 8;

struct FixedCorrespondenceValue {
  double cost = 0.0;
  std::vector<Vec3> grad;  // on S1
};

// EMD cost under a frozen assignment and its gradient on S1.
FixedCorrespondenceValue emd_fixed_correspondence(const PointCloud& s1, const PointCloud& s2,
                                                  const Assignment& assignment);

// Minimum-cost assignment for a dense row-major n x n cost matrix.
std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n);

}  // namespace ffdfit
