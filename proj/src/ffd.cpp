#include "ffdfit/ffd.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ffdfit {
namespace {

double binomial(int n, int k) {
  double c = 1.0;
  for (int i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
  return c;
}

// All degree+1 basis values at x, written into out.
void bernstein_row(int degree, double x, std::vector<double>& out) {
  out.resize(static_cast<std::size_t>(degree) + 1);
  for (int i = 0; i <= degree; ++i) out[static_cast<std::size_t>(i)] = bernstein(degree, i, x);
}

}  // namespace

ControlLattice::ControlLattice(LatticeDegrees degrees, const Box& domain)
    : degrees_(degrees), domain_(domain) {
  if (degrees.l < 1 || degrees.m < 1 || degrees.n < 1) {
    throw std::invalid_argument("lattice degrees must all be >= 1");
  }
  if (!domain.has_positive_volume()) {
    throw std::invalid_argument("lattice domain must have positive volume");
  }
}

ControlLattice ControlLattice::around(const PointCloud& pc, LatticeDegrees degrees, double padding) {
  return ControlLattice(degrees, pc.bounds().padded(padding));
}

std::array<int, 3> ControlLattice::grid_index(std::size_t flat) const {
  const auto nk = static_cast<std::size_t>(degrees_.n + 1);
  const auto nj = static_cast<std::size_t>(degrees_.m + 1);
  return {static_cast<int>(flat / (nj * nk)), static_cast<int>((flat / nk) % nj),
          static_cast<int>(flat % nk)};
}

Vec3 ControlLattice::rest_position(int i, int j, int k) const {
  const Vec3 t(static_cast<double>(i) / degrees_.l, static_cast<double>(j) / degrees_.m,
               static_cast<double>(k) / degrees_.n);
  return domain_.min + t.cwiseProduct(domain_.size());
}

std::vector<Vec3> ControlLattice::rest_positions() const {
  std::vector<Vec3> out;
  out.reserve(control_count());
  for (int i = 0; i <= degrees_.l; ++i)
    for (int j = 0; j <= degrees_.m; ++j)
      for (int k = 0; k <= degrees_.n; ++k) out.push_back(rest_position(i, j, k));
  return out;
}

Vec3 ControlLattice::local_coordinates(const Vec3& p) const {
  return (p - domain_.min).cwiseQuotient(domain_.size());
}

void DeformationField::check_matches(const ControlLattice& lattice) const {
  if (!(degrees == lattice.degrees()) || offsets.size() != lattice.control_count()) {
    throw SizeMismatch(fmt::format("field ({} {} {}, {} offsets) does not match lattice ({} {} {})",
                                   degrees.l, degrees.m, degrees.n, offsets.size(),
                                   lattice.degrees().l, lattice.degrees().m, lattice.degrees().n));
  }
}

double bernstein(int degree, int index, double x) {
  if (degree < 0 || index < 0 || index > degree) {
    throw std::out_of_range(fmt::format("Bernstein index {} outside [0, {}]", index, degree));
  }
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("Bernstein argument outside [0, 1]");
  return binomial(degree, index) * std::pow(1.0 - x, degree - index) * std::pow(x, index);
}

WeightTensor compute_weights(const ControlLattice& lattice, const PointCloud& pc) {
  const auto& deg = lattice.degrees();
  WeightTensor out;
  out.controls_ = lattice.control_count();
  out.coords_.reserve(pc.size());
  out.weights_.resize(pc.size() * out.controls_);

  std::vector<double> bu, bv, bw;
  for (std::size_t a = 0; a < pc.size(); ++a) {
    const Vec3 raw = lattice.local_coordinates(pc[a]);
    const Vec3 uvw = raw.cwiseMax(0.0).cwiseMin(1.0);
    if (uvw != raw) ++out.clamped_;
    out.coords_.push_back(uvw);
    bernstein_row(deg.l, uvw.x(), bu);
    bernstein_row(deg.m, uvw.y(), bv);
    bernstein_row(deg.n, uvw.z(), bw);
    double* row = out.weights_.data() + a * out.controls_;
    for (const double wu : bu)
      for (const double wv : bv)
        for (const double ww : bw) *row++ = wu * wv * ww;
  }
  return out;
}

PointCloud deform(const ControlLattice& lattice, const DeformationField& field, const PointCloud& pc) {
  field.check_matches(lattice);
  return deform(compute_weights(lattice, pc), field, pc);
}

PointCloud deform(const WeightTensor& weights, const DeformationField& field, const PointCloud& pc) {
  if (field.size() != weights.control_count()) {
    throw SizeMismatch("field offset count does not match weight tensor");
  }
  if (weights.point_count() != pc.size()) {
    throw SizeMismatch("weight tensor was computed for a different point count");
  }
  std::vector<Vec3> out;
  out.reserve(pc.size());
  for (std::size_t a = 0; a < pc.size(); ++a) {
    const auto row = weights.row(a);
    Vec3 shift = Vec3::Zero();
    for (std::size_t c = 0; c < row.size(); ++c) shift += row[c] * field.offsets[c];
    out.push_back(pc[a] + shift);
  }
  return PointCloud(std::move(out));
}

std::vector<Vec3> backprop_offsets(const WeightTensor& weights, std::span<const Vec3> grad_points) {
  if (grad_points.size() != weights.point_count()) {
    throw SizeMismatch(fmt::format("{} point gradients for {} weighted points", grad_points.size(),
                                   weights.point_count()));
  }
  std::vector<Vec3> grad(weights.control_count(), Vec3::Zero());
  // Fixed point order per control point keeps the sum bitwise reproducible.
  for (std::size_t a = 0; a < grad_points.size(); ++a) {
    const auto row = weights.row(a);
    for (std::size_t c = 0; c < row.size(); ++c) grad[c] += row[c] * grad_points[a];
  }
  return grad;
}

void write_field(std::ostream& out, const DeformationField& field) {
  out << field.degrees.l << ' ' << field.degrees.m << ' ' << field.degrees.n << '\n';
  const ControlLattice shape(field.degrees, Box{Vec3::Zero(), Vec3::Ones()});
  for (std::size_t c = 0; c < field.size(); ++c) {
    const auto [i, j, k] = shape.grid_index(c);
    const Vec3& d = field.offsets[c];
    out << i << ' ' << j << ' ' << k << ' ' << format_real(d.x()) << ' ' << format_real(d.y())
        << ' ' << format_real(d.z()) << '\n';
  }
}

DeformationField parse_field(std::istream& in) {
  std::string text;
  std::size_t line = 0;
  auto next = [&]() {
    while (std::getline(in, text)) {
      ++line;
      if (text.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next()) throw ParseError("empty deformation field file", 1);
  LatticeDegrees degrees;
  {
    std::istringstream header(text);
    if (!(header >> degrees.l >> degrees.m >> degrees.n) || degrees.l < 1 || degrees.m < 1 ||
        degrees.n < 1) {
      throw ParseError("expected header 'l m n' with positive degrees", line);
    }
  }
  const ControlLattice shape(degrees, Box{Vec3::Zero(), Vec3::Ones()});
  DeformationField field = DeformationField::zero(degrees);
  std::vector<bool> seen(field.size(), false);
  for (std::size_t count = 0; count < field.size(); ++count) {
    if (!next()) throw ParseError("too few control point lines", line);
    std::istringstream fields(text);
    int i = 0, j = 0, k = 0;
    Vec3 d;
    if (!(fields >> i >> j >> k >> d.x() >> d.y() >> d.z())) {
      throw ParseError("expected 'i j k dx dy dz'", line);
    }
    if (i < 0 || j < 0 || k < 0 || i > degrees.l || j > degrees.m || k > degrees.n) {
      throw ParseError("control point index out of range", line);
    }
    if (!d.allFinite()) throw ParseError("non-finite offset", line);
    const std::size_t flat = shape.flat_index(i, j, k);
    if (seen[flat]) throw ParseError("duplicate control point", line);
    seen[flat] = true;
    field.offsets[flat] = d;
  }
  return field;
}

void save_field(const std::filesystem::path& path, const DeformationField& field) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_field(out, field);
}

DeformationField load_field(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path);
  return parse_field(in);
}

}  // namespace ffdfit
