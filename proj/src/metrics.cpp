#include "ffdfit/metrics.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/kdtree.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <limits>
#include <numeric>

namespace ffdfit {
namespace {

void require_nonempty(const PointCloud& s1, const PointCloud& s2) {
  if (s1.empty() || s2.empty()) throw std::invalid_argument("Chamfer distance of an empty cloud");
}

void require_same_size(const PointCloud& s1, const PointCloud& s2) {
  if (s1.size() != s2.size()) {
    throw SizeMismatch(fmt::format("EMD needs equal point counts, got {} and {}; resample first",
                                   s1.size(), s2.size()));
  }
}

}  // namespace

ChamferValue chamfer(const PointCloud& s1, const PointCloud& s2) {
  require_nonempty(s1, s2);
  auto directed = [](const PointCloud& from, const PointCloud& to) {
    double sum = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, (p - q).squaredNorm());
      sum += best;
    }
    return sum;
  };
  return {directed(s1, s2), directed(s2, s1), s1.size(), s2.size()};
}

ChamferValue chamfer_fast(const PointCloud& s1, const PointCloud& s2) {
  require_nonempty(s1, s2);
  auto directed = [](const PointCloud& from, const PointCloud& to) {
    const KdTree tree(to.points());
    double sum = 0.0;
    for (const auto& p : from) sum += tree.nearest(p).distance_squared;
    return sum;
  };
  return {directed(s1, s2), directed(s2, s1), s1.size(), s2.size()};
}

std::vector<Vec3> chamfer_grad(const PointCloud& s1, const PointCloud& s2) {
  require_nonempty(s1, s2);
  return chamfer_with_grad(s1, s2, KdTree(s2.points())).grad;
}

ChamferWithGrad chamfer_with_grad(const PointCloud& s1, const PointCloud& s2, const KdTree& s2_tree) {
  require_nonempty(s1, s2);
  if (s2_tree.size() != s2.size()) throw SizeMismatch("k-d tree does not index S2");
  ChamferWithGrad out;
  out.value.size1 = s1.size();
  out.value.size2 = s2.size();
  out.grad.assign(s1.size(), Vec3::Zero());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const auto nn = s2_tree.nearest(s1[i]);
    out.value.forward += nn.distance_squared;
    out.grad[i] += 2.0 * (s1[i] - s2[nn.index]);
  }
  const KdTree s1_tree(s1.points());
  for (std::size_t j = 0; j < s2.size(); ++j) {
    const auto nn = s1_tree.nearest(s2[j]);
    out.value.backward += nn.distance_squared;
    out.grad[nn.index] += 2.0 * (s1[nn.index] - s2[j]);
  }
  return out;
}

double assignment_cost(const PointCloud& s1, const PointCloud& s2,
                       const std::vector<std::size_t>& mapping) {
  double cost = 0.0;
  for (std::size_t i = 0; i < mapping.size(); ++i) cost += (s1[i] - s2[mapping[i]]).norm();
  return cost;
}

bool is_bijection(const std::vector<std::size_t>& mapping, std::size_t n) {
  if (mapping.size() != n) return false;
  std::vector<bool> used(n, false);
  for (std::size_t j : mapping) {
    if (j >= n || used[j]) return false;
    used[j] = true;
  }
  return true;
}

std::vector<std::size_t> solve_assignment(const std::vector<double>& cost, std::size_t n) {
  // Shortest augmenting path with potentials; rows 1..n, columns 1..n, column 0
  // is the virtual source.
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> row_of_col(n + 1, 0), prev_col(n + 1, 0);
  std::vector<char> visited(n + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    row_of_col[0] = row;
    std::size_t col = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(visited.begin(), visited.end(), 0);
    do {
      visited[col] = 1;
      const std::size_t r = row_of_col[col];
      double delta = kInf;
      std::size_t next = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (visited[c]) continue;
        const double slack = cost[(r - 1) * n + (c - 1)] - row_pot[r] - col_pot[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          prev_col[c] = col;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          next = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (visited[c]) {
          row_pot[row_of_col[c]] += delta;
          col_pot[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col = next;
    } while (row_of_col[col] != 0);
    do {
      const std::size_t prev = prev_col[col];
      row_of_col[col] = row_of_col[prev];
      col = prev;
    } while (col != 0);
  }

  std::vector<std::size_t> mapping(n);
  for (std::size_t c = 1; c <= n; ++c) mapping[row_of_col[c] - 1] = c - 1;
  return mapping;
}

Assignment emd_exact(const PointCloud& s1, const PointCloud& s2) {
  require_same_size(s1, s2);
  const std::size_t n = s1.size();
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (s1[i] - s2[j]).norm();
  Assignment out;
  out.mapping = solve_assignment(cost, n);
  out.cost = assignment_cost(s1, s2, out.mapping);
  return out;
}

Assignment emd_bruteforce(const PointCloud& s1, const PointCloud& s2) {
  require_same_size(s1, s2);
  if (s1.size() > kBruteForceEmdLimit) {
    throw std::invalid_argument(
        fmt::format("brute-force EMD limited to {} points", kBruteForceEmdLimit));
  }
  std::vector<std::size_t> perm(s1.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Assignment best{perm, std::numeric_limits<double>::infinity()};
  do {
    const double cost = assignment_cost(s1, s2, perm);
    if (cost < best.cost) best = {perm, cost};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

FixedCorrespondenceValue emd_fixed_correspondence(const PointCloud& s1, const PointCloud& s2,
                                                  const Assignment& assignment) {
  require_same_size(s1, s2);
  if (!is_bijection(assignment.mapping, s1.size())) {
    throw std::invalid_argument("assignment is not a bijection for these clouds");
  }
  FixedCorrespondenceValue out;
  out.grad.assign(s1.size(), Vec3::Zero());
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const Vec3 diff = s1[i] - s2[assignment.mapping[i]];
    const double dist = diff.norm();
    out.cost += dist;
    if (dist > 0.0) out.grad[i] = diff / dist;
  }
  return out;
}

}  // namespace ffdfit
