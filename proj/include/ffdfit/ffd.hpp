#pragma once

#include "ffdfit/geometry.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace ffdfit {

// Polynomial degrees (l, m, n) of a trivariate Bezier lattice; (l+1)(m+1)(n+1)
// control points.
struct LatticeDegrees {
  int l = 3;
  int m = 3;
  int n = 3;

  std::size_t control_count() const {
    return static_cast<std::size_t>(l + 1) * static_cast<std::size_t>(m + 1) *
           static_cast<std::size_t>(n + 1);
  }
  bool operator==(const LatticeDegrees&) const = default;
};

// Uniform control grid over an axis-aligned domain. Control point (i, j, k)
// rests at domain.min + (i/l, j/m, k/n) * domain.size and is stored at
// flat index (i*(m+1) + j)*(n+1) + k.
class ControlLattice {
 public:
  ControlLattice(LatticeDegrees degrees, const Box& domain);

  // Lattice over the cloud's bounding box grown by `padding` of the largest
  // side on every side.
  static ControlLattice around(const PointCloud& pc, LatticeDegrees degrees = {},
                               double padding = 0.05);

  const LatticeDegrees& degrees() const { return degrees_; }
  const Box& domain() const { return domain_; }
  std::size_t control_count() const { return degrees_.control_count(); }

  std::size_t flat_index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * static_cast<std::size_t>(degrees_.m + 1) +
            static_cast<std::size_t>(j)) *
               static_cast<std::size_t>(degrees_.n + 1) +
           static_cast<std::size_t>(k);
  }
  std::array<int, 3> grid_index(std::size_t flat) const;
  Vec3 rest_position(int i, int j, int k) const;
  std::vector<Vec3> rest_positions() const;

  // (u, v, w) of p in the unit cube; not clamped.
  Vec3 local_coordinates(const Vec3& p) const;

 private:
  LatticeDegrees degrees_;
  Box domain_;
};

// Per-control-point offsets, indexed like ControlLattice.
struct DeformationField {
  LatticeDegrees degrees;
  std::vector<Vec3> offsets;

  static DeformationField zero(LatticeDegrees degrees) {
    return {degrees, std::vector<Vec3>(degrees.control_count(), Vec3::Zero())};
  }
  static DeformationField constant(LatticeDegrees degrees, const Vec3& t) {
    return {degrees, std::vector<Vec3>(degrees.control_count(), t)};
  }
  std::size_t size() const { return offsets.size(); }
  // Throws SizeMismatch unless degrees and offset count agree with `lattice`.
  void check_matches(const ControlLattice& lattice) const;
};

// Dense per-point rows of Bernstein products B_l,i(u) B_m,j(v) B_n,k(w).
class WeightTensor {
 public:
  std::size_t point_count() const { return coords_.size(); }
  std::size_t control_count() const { return controls_; }
  std::span<const double> row(std::size_t point) const {
    return {weights_.data() + point * controls_, controls_};
  }
  double operator()(std::size_t point, std::size_t control) const {
    return weights_[point * controls_ + control];
  }
  // Clamped (u, v, w) for each point.
  const std::vector<Vec3>& coordinates() const { return coords_; }
  // Points that fell outside the lattice domain and were clamped.
  std::size_t clamped_count() const { return clamped_; }

 private:
  friend WeightTensor compute_weights(const ControlLattice& lattice, const PointCloud& pc);
  std::size_t controls_ = 0;
  std::size_t clamped_ = 0;
  std::vector<Vec3> coords_;
  std::vector<double> weights_;
};

// C(degree, index) (1-x)^(degree-index) x^index.
double bernstein(int degree, int index, double x);

WeightTensor compute_weights(const ControlLattice& lattice, const PointCloud& pc);

// p' = p + sum_ijk offset_ijk * w_ijk(p).
PointCloud deform(const ControlLattice& lattice, const DeformationField& field, const PointCloud& pc);
PointCloud deform(const WeightTensor& weights, const DeformationField& field, const PointCloud& pc);

// Pulls per-point gradients back onto the control offsets:
// dL/d(offset_c) = sum_a w_(a,c) dL/dp'_a.
std::vector<Vec3> backprop_offsets(const WeightTensor& weights, std::span<const Vec3> grad_points);

// Text format: "l m n" header then one "i j k dx dy dz" line per control point.
void write_field(std::ostream& out, const DeformationField& field);
DeformationField parse_field(std::istream& in);
void save_field(const std::filesystem::path& path, const DeformationField& field);
DeformationField load_field(const std::filesystem::path& path);

}  // namespace ffdfit
