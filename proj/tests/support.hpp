#pragma once

// Test-only fixtures: synthetic meshes, random clouds and finite differences.

#include "ffdfit/ffd.hpp"
#include "ffdfit/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace ffdfit::testing {

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> pts(n);
  for (auto& p : pts) p = Vec3(u(rng), u(rng), u(rng));
  return PointCloud(std::move(pts));
}

inline std::vector<Vec3> random_vectors(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> out(n);
  for (auto& v : out) v = Vec3(u(rng), u(rng), u(rng));
  return out;
}

inline DeformationField random_field(LatticeDegrees deg, std::uint64_t seed, double scale) {
  return {deg, random_vectors(deg.control_count(), seed, scale)};
}

inline TriangleMesh box_mesh(const Vec3& size) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back((i & 1 ? 0.5 : -0.5) * size.x(), (i & 2 ? 0.5 : -0.5) * size.y(),
                            (i & 4 ? 0.5 : -0.5) * size.z());
  }
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({std::size_t(q[0]), std::size_t(q[1]), std::size_t(q[2])});
    m.faces.push_back({std::size_t(q[0]), std::size_t(q[2]), std::size_t(q[3])});
  }
  return m;
}

// Ellipsoid (UV sphere scaled per axis).
inline TriangleMesh ellipsoid_mesh(const Vec3& radii, int rings = 16, int segments = 24) {
  TriangleMesh m;
  const double pi = std::numbers::pi;
  for (int r = 0; r <= rings; ++r) {
    const double theta = pi * r / rings;
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * pi * s / segments;
      m.vertices.emplace_back(radii.x() * std::sin(theta) * std::cos(phi), radii.y() * std::cos(theta),
                              radii.z() * std::sin(theta) * std::sin(phi));
    }
  }
  auto at = [&](int r, int s) { return std::size_t(r * segments + (s % segments)); };
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < segments; ++s) {
      if (r > 0) m.faces.push_back({at(r, s), at(r + 1, s), at(r, s + 1)});
      if (r + 1 < rings) m.faces.push_back({at(r, s + 1), at(r + 1, s), at(r + 1, s + 1)});
    }
  return m;
}

// Closed cylinder along y.
inline TriangleMesh cylinder_mesh(double radius, double height, int segments = 24) {
  TriangleMesh m;
  const double pi = std::numbers::pi;
  for (int level = 0; level < 2; ++level)
    for (int s = 0; s < segments; ++s) {
      const double phi = 2.0 * pi * s / segments;
      m.vertices.emplace_back(radius * std::cos(phi), level * height, radius * std::sin(phi));
    }
  const std::size_t bottom = m.vertices.size();
  m.vertices.emplace_back(0.0, 0.0, 0.0);
  const std::size_t top = m.vertices.size();
  m.vertices.emplace_back(0.0, height, 0.0);
  const auto n = std::size_t(segments);
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t a = s, b = (s + 1) % n;
    m.faces.push_back({a, n + a, b});
    m.faces.push_back({b, n + a, n + b});
    m.faces.push_back({bottom, a, b});
    m.faces.push_back({top, n + b, n + a});
  }
  return m;
}

// Two boxes joined into a chair-like L shape.
inline TriangleMesh l_shape_mesh() {
  TriangleMesh seat = box_mesh(Vec3(1.0, 0.2, 1.0));
  TriangleMesh back = box_mesh(Vec3(1.0, 1.0, 0.2));
  const std::size_t offset = seat.vertices.size();
  for (auto v : back.vertices) seat.vertices.push_back(v + Vec3(0.0, 0.6, -0.4));
  for (auto f : back.faces) seat.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  return seat;
}

// Central differences of a scalar function over a flat list of 3D parameters.
inline std::vector<Vec3> numeric_gradient(std::vector<Vec3> params,
                                          const std::function<double(const std::vector<Vec3>&)>& f,
                                          double h = 1e-5) {
  std::vector<Vec3> grad(params.size(), Vec3::Zero());
  for (std::size_t i = 0; i < params.size(); ++i)
    for (int axis = 0; axis < 3; ++axis) {
      const double keep = params[i][axis];
      params[i][axis] = keep + h;
      const double up = f(params);
      params[i][axis] = keep - h;
      const double down = f(params);
      params[i][axis] = keep;
      grad[i][axis] = (up - down) / (2.0 * h);
    }
  return grad;
}

// ||analytic - numeric||_inf / ||numeric||_inf over all components.
inline double gradient_error(const std::vector<Vec3>& analytic, const std::vector<Vec3>& numeric) {
  double scale = 1e-300, worst = 0.0;
  for (const auto& g : numeric) scale = std::max(scale, g.cwiseAbs().maxCoeff());
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, (analytic[i] - numeric[i]).cwiseAbs().maxCoeff());
  }
  return worst / scale;
}

}  // namespace ffdfit::testing
