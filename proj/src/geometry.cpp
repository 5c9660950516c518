#include "ffdfit/geometry.hpp"

#include "ffdfit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace ffdfit {

Box Box::bounding(std::span<const Vec3> points) {
  if (points.empty()) {
    throw std::invalid_argument("bounding box of an empty point set");
  }
  Box box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

Box Box::padded(double fraction) const {
  double pad = fraction * size().maxCoeff();
  if (pad <= 0.0) pad = fraction;
  const Vec3 delta = Vec3::Constant(pad);
  return Box{min - delta, max + delta};
}

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  if (points_.empty()) {
    throw std::invalid_argument("point cloud must contain at least one point");
  }
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!points_[i].allFinite()) {
      throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

Vec3 PointCloud::centroid() const {
  Vec3 sum = Vec3::Zero();
  for (const auto& p : points_) sum += p;
  return sum / static_cast<double>(points_.size());
}

PointCloud PointCloud::translated(const Vec3& t) const {
  std::vector<Vec3> out(points_);
  for (auto& p : out) p += t;
  return PointCloud(std::move(out));
}

PointCloud PointCloud::scaled(double factor, const Vec3& center) const {
  std::vector<Vec3> out(points_);
  for (auto& p : out) p = center + factor * (p - center);
  return PointCloud(std::move(out));
}

double TriangleMesh::triangle_area(std::size_t f) const {
  const auto& [a, b, c] = faces[f];
  return 0.5 * (vertices[b] - vertices[a]).cross(vertices[c] - vertices[a]).norm();
}

double TriangleMesh::surface_area() const {
  double total = 0.0;
  for (std::size_t f = 0; f < faces.size(); ++f) total += triangle_area(f);
  return total;
}

std::size_t VoxelGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(occupancy.begin(), occupancy.end(), std::uint8_t{1}));
}

PointCloud NormalizationTransform::apply(const PointCloud& pc) const {
  std::vector<Vec3> out;
  out.reserve(pc.size());
  for (const auto& p : pc) out.push_back(apply(p));
  return PointCloud(std::move(out));
}

PointCloud NormalizationTransform::invert(const PointCloud& pc) const {
  std::vector<Vec3> out;
  out.reserve(pc.size());
  for (const auto& q : pc) out.push_back(invert(q));
  return PointCloud(std::move(out));
}

PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("sample count must be positive");
  std::vector<double> areas(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) areas[f] = mesh.triangle_area(f);
  const double total = std::accumulate(areas.begin(), areas.end(), 0.0);
  if (!(total > 0.0)) throw DegenerateGeometry("mesh has zero surface area");

  std::mt19937_64 rng(seed);
  std::discrete_distribution<std::size_t> pick_face(areas.begin(), areas.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<Vec3> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto& [ia, ib, ic] = mesh.faces[pick_face(rng)];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    out.push_back((1.0 - r1) * mesh.vertices[ia] + r1 * (1.0 - r2) * mesh.vertices[ib] +
                  r1 * r2 * mesh.vertices[ic]);
  }
  return PointCloud(std::move(out));
}

Normalized normalize_for_eval(const PointCloud& pc) {
  const Vec3 c = pc.centroid();
  const Box box = pc.bounds();
  NormalizationTransform t;
  t.translation = Vec3(-c.x(), -box.min.y(), -c.z());

  double max_norm = 0.0;
  for (const auto& p : pc) max_norm = std::max(max_norm, (p + t.translation).norm());
  if (!(max_norm > 0.0)) {
    throw DegenerateGeometry("cannot normalize a cloud whose points all coincide");
  }
  t.scale = 1.0 / max_norm;
  return {t.apply(pc), t};
}

PointCloud resample(const PointCloud& pc, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("resample count must be positive");
  std::mt19937_64 rng(seed);
  std::vector<Vec3> out;
  out.reserve(n);
  if (n <= pc.size()) {
    std::vector<std::size_t> order(pc.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pc[order[i]]);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pc.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pc[pick(rng)]);
  }
  return PointCloud(std::move(out));
}

VoxelGrid voxelize(const PointCloud& pc, int resolution) {
  return voxelize(pc, resolution, pc.bounds().padded(0.02));
}

VoxelGrid voxelize(const PointCloud& pc, int resolution, const Box& extent) {
  if (resolution < 1) throw std::invalid_argument("voxel resolution must be >= 1");
  if (!extent.has_positive_volume()) {
    throw std::invalid_argument("voxel extent must have positive volume");
  }
  const std::size_t r = static_cast<std::size_t>(resolution);
  VoxelGrid grid{resolution, extent, std::vector<std::uint8_t>(r * r * r, 0)};
  const Vec3 size = extent.size();
  for (const auto& p : pc) {
    std::array<std::size_t, 3> cell{};
    for (int axis = 0; axis < 3; ++axis) {
      const double t = std::floor((p[axis] - extent.min[axis]) / size[axis] * resolution);
      cell[axis] = static_cast<std::size_t>(std::clamp(t, 0.0, static_cast<double>(resolution - 1)));
    }
    grid.occupancy[cell[0] + r * (cell[1] + r * cell[2])] = 1;
  }
  return grid;
}

double point_triangle_distance_squared(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c) {
  // Closest-point region test (Ericson, Real-Time Collision Detection 5.1.5).
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.squaredNorm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.squaredNorm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).squaredNorm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.squaredNorm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).squaredNorm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).squaredNorm();
  }
  const double denom = 1.0 / (va + vb + vc);
  const Vec3 closest = a + ab * (vb * denom) + ac * (vc * denom);
  return (p - closest).squaredNorm();
}

}  // namespace ffdfit
