#pragma once

#include "ffdfit/ffd.hpp"
#include "ffdfit/geometry.hpp"
#include "ffdfit/kdtree.hpp"
#include "ffdfit/metrics.hpp"
#include "ffdfit/regularizers.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ffdfit {

enum class LossKind {
  chamfer,    // Chamfer sum
  emd_fixed,  // EMD under the assignment of the undeformed template
  emd_true,   // EMD with the assignment re-solved every iteration (small n only)
};

std::string to_string(LossKind kind);
LossKind parse_loss_kind(const std::string& text);

struct FitConfig {
  LossKind loss = LossKind::chamfer;
  int iterations = 2000;
  double lr_initial = 5e-4;
  double lr_final = 5e-5;
  int lr_drop_iteration = 1500;
  double adam_beta1 = 0.95;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  RegularizerWeights regularizer_weights;
  std::uint64_t seed = 0;
  // Only consulted when the lattice is built around the template.
  int lattice_degree = 3;
  double lattice_padding = 0.05;

  // Throws ConfigError naming the offending key.
  void validate() const;
  double learning_rate(int iteration) const {
    return iteration < lr_drop_iteration ? lr_initial : lr_final;
  }
};

// Applies one "key=value" setting; throws ConfigError on unknown keys or bad values.
void set_config_value(FitConfig& config, const std::string& key, const std::string& value);
// Flat key=value lines; '#' starts a comment.
FitConfig parse_fit_config(std::istream& in);
void write_fit_config(std::ostream& out, const FitConfig& config);

struct LossBreakdown {
  double total = 0.0;
  double data = 0.0;
  double reg_l1 = 0.0;      // unweighted
  double reg_smooth = 0.0;  // unweighted
  std::vector<Vec3> grad;   // per control offset
  double grad_norm() const;
};

// Loss of a deformed template against a fixed target, with the template's
// Bernstein weights and the target's k-d tree built once.
class FitProblem {
 public:
  FitProblem(PointCloud template_cloud, PointCloud target, ControlLattice lattice,
             RegularizerWeights weights, LossKind kind,
             std::optional<Assignment> frozen_assignment = std::nullopt);

  LossBreakdown evaluate(const DeformationField& field) const;
  PointCloud deformed(const DeformationField& field) const;

  const ControlLattice& lattice() const { return lattice_; }
  const PointCloud& template_cloud() const { return template_; }
  const PointCloud& target() const { return target_; }
  const WeightTensor& weights() const { return weights_; }

 private:
  PointCloud template_;
  PointCloud target_;
  ControlLattice lattice_;
  RegularizerWeights reg_;
  LossKind kind_;
  std::optional<Assignment> frozen_;
  WeightTensor weights_;
  std::unique_ptr<KdTree> target_tree_;
};

// data(deform(template, field), target) + lambda_l1 * L1 + lambda_smooth * smoothness,
// with its gradient on the offsets.
LossBreakdown total_loss(const PointCloud& template_cloud, const DeformationField& field,
                         const PointCloud& target, const ControlLattice& lattice,
                         const RegularizerWeights& weights, LossKind kind,
                         const std::optional<Assignment>& frozen_assignment = std::nullopt);

struct AdamState {
  std::vector<Vec3> first_moment;
  std::vector<Vec3> second_moment;
  long step_count = 0;

  static AdamState zeros(std::size_t size) {
    return {std::vector<Vec3>(size, Vec3::Zero()), std::vector<Vec3>(size, Vec3::Zero()), 0};
  }
};

struct AdamHyper {
  double beta1 = 0.95;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam update; returns the step to add to the parameters.
std::vector<Vec3> adam_step(AdamState& state, std::span<const Vec3> gradients, double lr,
                            const AdamHyper& hyper = {});

struct FitRecord {
  int iteration = 0;
  double total = 0.0;
  double data = 0.0;
  double reg_l1 = 0.0;
  double reg_smooth = 0.0;
  double grad_norm = 0.0;

  bool operator==(const FitRecord&) const = default;
};

using FitTrace = std::vector<FitRecord>;

// CSV with header "iter,total,data,reg_l1,reg_smooth,grad_norm".
void write_trace_csv(std::ostream& out, const FitTrace& trace);

struct FitResult {
  DeformationField field;
  FitTrace trace;          // loss before each update
  LossBreakdown final_loss;  // at the returned field
};

// Raised when the loss stops being finite; carries the trace up to that point.
class FitDiverged : public std::runtime_error {
 public:
  FitDiverged(const std::string& what, FitTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const FitTrace& trace() const { return trace_; }

 private:
  FitTrace trace_;
};

// Adam on the control offsets from a zero field. For LossKind::emd_fixed the
// assignment is solved once between the undeformed template and the target.
FitResult fit_deformation(const PointCloud& template_cloud, const PointCloud& target,
                          const ControlLattice& lattice, const FitConfig& config);

}  // namespace ffdfit
