#include "doctest.h"

#include "ffdfit/errors.hpp"
#include "ffdfit/ffd.hpp"
#include "ffdfit/kdtree.hpp"
#include "ffdfit/metrics.hpp"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

using namespace ffdfit;
using namespace ffdfit::testing;

namespace {

// Points of S1 whose Chamfer gradient is not locally smooth: a nearest-neighbour
// choice (in either direction) within `band` of switching.
std::set<std::size_t> tie_points(const PointCloud& s1, const PointCloud& s2, double band) {
  std::set<std::size_t> out;
  auto two_nearest = [](const Vec3& q, const PointCloud& set) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t i = 0; i < set.size(); ++i) d.emplace_back((set[i] - q).norm(), i);
    std::partial_sort(d.begin(), d.begin() + 2, d.end());
    return std::make_pair(d[0], d[1]);
  };
  for (std::size_t i = 0; i < s1.size(); ++i) {
    const auto [a, b] = two_nearest(s1[i], s2);
    if (b.first - a.first < band) out.insert(i);
  }
  for (std::size_t j = 0; j < s2.size(); ++j) {
    const auto [a, b] = two_nearest(s2[j], s1);
    if (b.first - a.first < band) {
      out.insert(a.second);
      out.insert(b.second);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("chamfer: squared-distance symmetric sum") {
  CHECK(chamfer(random_cloud(30, 1), random_cloud(30, 1)).sum() == 0.0);
  CHECK(chamfer(PointCloud({Vec3(0, 0, 0)}), PointCloud({Vec3(1, 0, 0)})).sum() == 2.0);
  const auto v = chamfer(PointCloud({Vec3(0, 0, 0), Vec3(1, 0, 0)}), PointCloud({Vec3(0, 0, 0)}));
  CHECK(v.sum() == 1.0);
  CHECK(v.forward == 1.0);
  CHECK(v.backward == 0.0);
  CHECK(v.average() == 0.5);
  CHECK(v.average_combined() == doctest::Approx(1.0 / 3.0));
  // Squared, not plain distance: a gap of 2 contributes 4 each way.
  CHECK(chamfer(PointCloud({Vec3(0, 0, 0)}), PointCloud({Vec3(0, 2, 0)})).sum() == 8.0);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_cloud(40, seed), b = random_cloud(25, seed + 50);
    CHECK(chamfer(a, b).sum() == doctest::Approx(chamfer(b, a).sum()).epsilon(1e-14));
  }
}

TEST_CASE("chamfer_fast agrees with brute force") {
  CHECK(chamfer_fast(random_cloud(50, 2), random_cloud(50, 2)).sum() == 0.0);
  const PointCloud p({Vec3(0.3, 0.1, 0)}), q({Vec3(1, 2, 3)});
  CHECK(chamfer_fast(p, q).sum() == chamfer(p, q).sum());
  const auto a = random_cloud(1024, 7), b = random_cloud(1024, 8);
  CHECK(std::abs(chamfer_fast(a, b).sum() - chamfer(a, b).sum()) <= 1e-9);
  // Clustered and duplicated points exercise the leaf and tie paths.
  std::vector<Vec3> dup(200, Vec3(0.5, 0.5, 0.5));
  for (const auto& x : random_cloud(200, 9, 0.49, 0.51)) dup.push_back(x);
  const PointCloud clustered(dup);
  CHECK(std::abs(chamfer_fast(clustered, b).sum() - chamfer(clustered, b).sum()) <= 1e-9);
  CHECK_THROWS(chamfer(PointCloud(), a));
}

TEST_CASE("k-d tree resolves ties to the lowest index") {
  const std::vector<Vec3> pts{Vec3(1, 0, 0), Vec3(-1, 0, 0), Vec3(0, 1, 0), Vec3(1, 0, 0)};
  const KdTree tree(pts);
  CHECK(tree.nearest(Vec3::Zero()).index == 0);
  CHECK(tree.nearest(Vec3(2, 0, 0)).index == 0);
  std::vector<Vec3> many(100, Vec3::Ones());
  const KdTree same(many);
  CHECK(same.nearest(Vec3::Zero()).index == 0);
}

TEST_CASE("chamfer_grad") {
  SUBCASE("identical clouds") {
    const auto pc = random_cloud(30, 4);
    for (const auto& g : chamfer_grad(pc, pc)) CHECK(g == Vec3::Zero());
  }
  SUBCASE("single pair, both directions contribute") {
    const auto g = chamfer_grad(PointCloud({Vec3(1, 0, 0)}), PointCloud({Vec3(0, 0, 0)}));
    CHECK(g[0] == Vec3(4, 0, 0));
  }
  SUBCASE("finite differences away from ties") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto s1 = random_cloud(50, 10 + seed), s2 = random_cloud(50, 60 + seed);
      const auto analytic = chamfer_grad(s1, s2);
      auto loss = [&](const std::vector<Vec3>& pts) { return chamfer(PointCloud(pts), s2).sum(); };
      const auto numeric = numeric_gradient({s1.begin(), s1.end()}, loss, 1e-6);
      const auto excluded = tie_points(s1, s2, 1e-4);
      std::vector<Vec3> kept_analytic, kept_numeric;
      for (std::size_t i = 0; i < s1.size(); ++i) {
        if (excluded.count(i)) continue;
        kept_analytic.push_back(analytic[i]);
        kept_numeric.push_back(numeric[i]);
      }
      CHECK(kept_numeric.size() >= 25);
      CHECK(gradient_error(kept_analytic, kept_numeric) <= 1e-5);
    }
  }
}

TEST_CASE("emd_exact") {
  SUBCASE("identical clouds cost nothing") {
    const auto pc = random_cloud(40, 3);
    CHECK(emd_exact(pc, pc).cost == 0.0);
  }
  SUBCASE("straight-up matching") {
    const auto a = emd_exact(PointCloud({Vec3(0, 0, 0), Vec3(1, 0, 0)}),
                             PointCloud({Vec3(0, 0, 1), Vec3(1, 0, 1)}));
    // Brute force over both permutations: identity costs 1 + 1, swap costs 2*sqrt(2).
    CHECK(a.cost == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(a.mapping == std::vector<std::size_t>{0, 1});
  }
  SUBCASE("un-squared norms") {
    // Pairing by squared distance would prefer neither; plain norms make the
    // single-point cost exactly the Euclidean gap.
    CHECK(emd_exact(PointCloud({Vec3(0, 0, 0)}), PointCloud({Vec3(0, 3, 4)})).cost == 5.0);
  }
  SUBCASE("matches the permutation oracle") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const auto a = random_cloud(7, seed), b = random_cloud(7, seed + 1000);
      const auto exact = emd_exact(a, b);
      CHECK(is_bijection(exact.mapping, 7));
      CHECK(std::abs(exact.cost - emd_bruteforce(a, b).cost) <= 1e-9);
      CHECK(std::abs(exact.cost - assignment_cost(a, b, exact.mapping)) <= 1e-9);
    }
  }
  SUBCASE("translation moves the cost by at most n|t|") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto a = random_cloud(30, seed), b = random_cloud(30, seed + 7);
      const Vec3 t = random_vectors(1, seed + 99, 0.5)[0];
      const double delta = std::abs(emd_exact(a, b.translated(t)).cost - emd_exact(a, b).cost);
      CHECK(delta <= 30 * t.norm() + 1e-9);
    }
  }
  SUBCASE("size mismatch") {
    CHECK_THROWS_AS(emd_exact(random_cloud(3, 1), random_cloud(4, 1)), SizeMismatch);
  }
}

TEST_CASE("emd_bruteforce") {
  SUBCASE("single pairing") {
    const auto a = emd_bruteforce(PointCloud({Vec3(1, 1, 1)}), PointCloud({Vec3(1, 1, 2)}));
    CHECK(a.mapping == std::vector<std::size_t>{0});
    CHECK(a.cost == 1.0);
  }
  SUBCASE("crossing pair picks the swap") {
    const PointCloud s1({Vec3(0, 0, 0), Vec3(1, 0, 0)});
    const PointCloud s2({Vec3(1, 0.1, 0), Vec3(0, 0.1, 0)});
    const auto a = emd_bruteforce(s1, s2);
    CHECK(a.mapping == std::vector<std::size_t>{1, 0});
    CHECK(a.cost == doctest::Approx(0.2));
  }
  SUBCASE("n = 3 matches emd_exact") {
    const auto a = random_cloud(3, 5), b = random_cloud(3, 6);
    CHECK(std::abs(emd_bruteforce(a, b).cost - emd_exact(a, b).cost) <= 1e-12);
  }
  SUBCASE("refuses more than 8 points") {
    CHECK_THROWS(emd_bruteforce(random_cloud(9, 1), random_cloud(9, 2)));
  }
}

TEST_CASE("emd_fixed_correspondence") {
  const auto a = random_cloud(40, 11), b = random_cloud(40, 12);
  SUBCASE("identity on identical clouds") {
    std::vector<std::size_t> id(40);
    std::iota(id.begin(), id.end(), std::size_t{0});
    const auto v = emd_fixed_correspondence(a, a, Assignment{id, 0.0});
    CHECK(v.cost == 0.0);
    for (const auto& g : v.grad) CHECK(g == Vec3::Zero());
  }
  SUBCASE("consistent with the exact assignment") {
    const auto exact = emd_exact(a, b);
    CHECK(std::abs(emd_fixed_correspondence(a, b, exact).cost - exact.cost) <= 1e-12);
  }
  SUBCASE("a frozen assignment never beats re-solving after deformation") {
    const auto frozen = emd_exact(a, b);
    const auto lattice = ControlLattice::around(a);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto moved = deform(lattice, random_field(lattice.degrees(), seed, 0.3), a);
      CHECK(emd_fixed_correspondence(moved, b, frozen).cost >= emd_exact(moved, b).cost - 1e-12);
    }
  }
  SUBCASE("gradient is the unit vector away from the partner") {
    const auto frozen = emd_exact(a, b);
    const auto v = emd_fixed_correspondence(a, b, frozen);
    auto loss = [&](const std::vector<Vec3>& pts) {
      return emd_fixed_correspondence(PointCloud(pts), b, frozen).cost;
    };
    CHECK(gradient_error(v.grad, numeric_gradient({a.begin(), a.end()}, loss)) <= 1e-6);
    for (const auto& g : v.grad) CHECK(g.norm() == doctest::Approx(1.0));
  }
  SUBCASE("invalid bijection") {
    CHECK_THROWS(emd_fixed_correspondence(a, b, Assignment{std::vector<std::size_t>(40, 0), 0.0}));
  }
}
