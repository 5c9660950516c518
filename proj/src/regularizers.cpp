#include "ffdfit/regularizers.hpp"

#include "ffdfit/errors.hpp"

#include <functional>

namespace ffdfit {
namespace {

// Visits every unordered 6-neighbour pair of the lattice grid once.
void for_each_edge(const LatticeDegrees& deg,
                   const std::function<void(std::size_t, std::size_t)>& visit) {
  const ControlLattice shape(deg, Box{Vec3::Zero(), Vec3::Ones()});
  for (int i = 0; i <= deg.l; ++i)
    for (int j = 0; j <= deg.m; ++j)
      for (int k = 0; k <= deg.n; ++k) {
        const std::size_t a = shape.flat_index(i, j, k);
        if (i < deg.l) visit(a, shape.flat_index(i + 1, j, k));
        if (j < deg.m) visit(a, shape.flat_index(i, j + 1, k));
        if (k < deg.n) visit(a, shape.flat_index(i, j, k + 1));
      }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

RegularizerValue offset_l1(const PointCloud& original, const PointCloud& deformed) {
  if (original.size() != deformed.size()) {
    throw SizeMismatch("L1 offset regularizer needs corresponding clouds of equal size");
  }
  RegularizerValue out;
  out.grad.resize(deformed.size());
  for (std::size_t a = 0; a < deformed.size(); ++a) {
    const Vec3 d = deformed[a] - original[a];
    out.value += d.cwiseAbs().sum();
    out.grad[a] = Vec3(sign(d.x()), sign(d.y()), sign(d.z()));
  }
  return out;
}

RegularizerValue lattice_smoothness(const DeformationField& field, const ControlLattice& lattice) {
  field.check_matches(lattice);
  RegularizerValue out;
  out.grad.assign(field.size(), Vec3::Zero());
  for_each_edge(field.degrees, [&](std::size_t a, std::size_t b) {
    const Vec3 diff = field.offsets[a] - field.offsets[b];
    out.value += diff.squaredNorm();
    out.grad[a] += 2.0 * diff;
    out.grad[b] -= 2.0 * diff;
  });
  return out;
}

double mean_neighbor_difference(const DeformationField& field) {
  double total = 0.0;
  std::size_t edges = 0;
  for_each_edge(field.degrees, [&](std::size_t a, std::size_t b) {
    total += (field.offsets[a] - field.offsets[b]).norm();
    ++edges;
  });
  return edges ? total / static_cast<double>(edges) : 0.0;
}

}  // namespace ffdfit
