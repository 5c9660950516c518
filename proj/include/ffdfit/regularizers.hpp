#pragma once

#include "ffdfit/ffd.hpp"
#include "ffdfit/geometry.hpp"

#include <vector>

namespace ffdfit {

struct RegularizerWeights {
  double lambda_smooth = 0.05;
  double lambda_l1 = 0.0;
};

struct RegularizerValue {
  double value = 0.0;
  std::vector<Vec3> grad;
};

// Sum of absolute per-axis displacements; gradient (on `deformed`) is the
// componentwise sign, zero where a component has not moved.
RegularizerValue offset_l1(const PointCloud& original, const PointCloud& deformed);

// Sum over each axis-adjacent pair of control points of ||offset_a - offset_b||^2.
RegularizerValue lattice_smoothness(const DeformationField& field, const ControlLattice& lattice);

// Mean of ||offset_a - offset_b|| over axis-adjacent control-point pairs.
double mean_neighbor_difference(const DeformationField& field);

}  // namespace ffdfit
