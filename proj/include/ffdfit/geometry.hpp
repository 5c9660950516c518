#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ffdfit {

using Vec3 = Eigen::Vector3d;

// Axis-aligned box [min, max].
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 size() const { return max - min; }
  Vec3 center() const { return 0.5 * (min + max); }
  double diagonal() const { return size().norm(); }
  bool has_positive_volume() const { return (size().array() > 0.0).all(); }

  static Box bounding(std::span<const Vec3> points);
  // Grows every side by `fraction` of the largest side length. A zero-size box
  // grows by `fraction` in absolute units so the result always has volume.
  Box padded(double fraction) const;
};

// Ordered, nonempty list of finite 3D points.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Vec3> points() const { return points_; }
  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

  Vec3 centroid() const;
  Box bounds() const { return Box::bounding(points_); }

  PointCloud translated(const Vec3& t) const;
  // Uniform scale about `center`.
  PointCloud scaled(double factor, const Vec3& center) const;

 private:
  std::vector<Vec3> points_;
};

using Face = std::array<std::size_t, 3>;

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  double triangle_area(std::size_t f) const;
  double surface_area() const;
};

// Occupancy grid over `extent`, R cells per axis, cell (i,j,k) stored at
// i + R*(j + R*k).
struct VoxelGrid {
  int resolution = 0;
  Box extent;
  std::vector<std::uint8_t> occupancy;

  bool occupied(int i, int j, int k) const {
    return occupancy[static_cast<std::size_t>(i) +
                     static_cast<std::size_t>(resolution) *
                         (static_cast<std::size_t>(j) +
                          static_cast<std::size_t>(resolution) * static_cast<std::size_t>(k))] != 0;
  }
  std::size_t occupied_count() const;
};

// Maps p to (p + translation) * scale.
struct NormalizationTransform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return (p + translation) * scale; }
  Vec3 invert(const Vec3& q) const { return q / scale - translation; }
  PointCloud apply(const PointCloud& pc) const;
  PointCloud invert(const PointCloud& pc) const;
};

struct Normalized {
  PointCloud cloud;
  NormalizationTransform transform;
};

// Distances in normalized space are reported in units where the working grid
// edge measures this many units.
inline constexpr double kEvalGridUnits = 10.0;

// Area-weighted triangle choice followed by uniform barycentric sampling.
PointCloud sample_surface(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

// Puts the lowest point on y = 0, centres x and z on the centroid, and scales
// so the farthest point has norm 1.
Normalized normalize_for_eval(const PointCloud& pc);

// n points drawn uniformly; without replacement when n <= size, with
// replacement otherwise.
PointCloud resample(const PointCloud& pc, std::size_t n, std::uint64_t seed);

// Occupancy over the padded bounding box of the cloud (2% per side).
VoxelGrid voxelize(const PointCloud& pc, int resolution);
VoxelGrid voxelize(const PointCloud& pc, int resolution, const Box& extent);

// Squared distance from p to triangle (a, b, c).
double point_triangle_distance_squared(const Vec3& p, const Vec3& a, const Vec3& b,
                                       const Vec3& c);

}  // namespace ffdfit
