#include "ffdfit/fit.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/io.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>

namespace ffdfit {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || ptr != value.data() + value.size()) {
    throw ConfigError(fmt::format("invalid value '{}' for key '{}'", value, key), key);
  }
  return out;
}

}  // namespace

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::chamfer: return "chamfer";
    case LossKind::emd_fixed: return "emd_fixed";
    case LossKind::emd_true: return "emd_true";
  }
  return "chamfer";
}

LossKind parse_loss_kind(const std::string& text) {
  if (text == "chamfer" || text == "cd") return LossKind::chamfer;
  if (text == "emd_fixed" || text == "emd") return LossKind::emd_fixed;
  if (text == "emd_true") return LossKind::emd_true;
  throw ConfigError("unknown loss '" + text + "' (chamfer, emd_fixed, emd_true)", "loss");
}

void FitConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw ConfigError(fmt::format("invalid {}: {}", key, why), key);
  };
  if (iterations < 1) fail("iterations", "must be positive");
  if (!(lr_initial > 0.0)) fail("lr_initial", "must be positive");
  if (!(lr_final > 0.0)) fail("lr_final", "must be positive");
  if (lr_final > lr_initial) fail("lr_final", "must not exceed lr_initial");
  if (lr_drop_iteration < 0) fail("lr_drop_iteration", "must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must lie in [0, 1)");
  if (!(adam_epsilon > 0.0)) fail("adam_epsilon", "must be positive");
  if (!(regularizer_weights.lambda_smooth >= 0.0)) fail("lambda_smooth", "must be non-negative");
  if (!(regularizer_weights.lambda_l1 >= 0.0)) fail("lambda_l1", "must be non-negative");
  if (lattice_degree < 1) fail("lattice_degree", "must be >= 1");
  if (!(lattice_padding >= 0.0)) fail("lattice_padding", "must be non-negative");
}

void set_config_value(FitConfig& c, const std::string& key, const std::string& value) {
  if (key == "loss") c.loss = parse_loss_kind(value);
  else if (key == "iterations") c.iterations = parse_number<int>(key, value);
  else if (key == "lr_initial") c.lr_initial = parse_number<double>(key, value);
  else if (key == "lr_final") c.lr_final = parse_number<double>(key, value);
  else if (key == "lr_drop_iteration") c.lr_drop_iteration = parse_number<int>(key, value);
  else if (key == "adam_beta1") c.adam_beta1 = parse_number<double>(key, value);
  else if (key == "adam_beta2") c.adam_beta2 = parse_number<double>(key, value);
  else if (key == "adam_epsilon") c.adam_epsilon = parse_number<double>(key, value);
  else if (key == "lambda_smooth") c.regularizer_weights.lambda_smooth = parse_number<double>(key, value);
  else if (key == "lambda_l1") c.regularizer_weights.lambda_l1 = parse_number<double>(key, value);
  else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "lattice_degree") c.lattice_degree = parse_number<int>(key, value);
  else if (key == "lattice_padding") c.lattice_padding = parse_number<double>(key, value);
  else throw ConfigError("unknown config key '" + key + "'", key);
}

FitConfig parse_fit_config(std::istream& in) {
  FitConfig config;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (const auto hash = text.find('#'); hash != std::string::npos) text.erase(hash);
    text = trim(text);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value", line);
    set_config_value(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  config.validate();
  return config;
}

void write_fit_config(std::ostream& out, const FitConfig& c) {
  out << "loss=" << to_string(c.loss) << "\niterations=" << c.iterations
      << "\nlr_initial=" << format_real(c.lr_initial) << "\nlr_final=" << format_real(c.lr_final)
      << "\nlr_drop_iteration=" << c.lr_drop_iteration
      << "\nadam_beta1=" << format_real(c.adam_beta1) << "\nadam_beta2=" << format_real(c.adam_beta2)
      << "\nadam_epsilon=" << format_real(c.adam_epsilon)
      << "\nlambda_smooth=" << format_real(c.regularizer_weights.lambda_smooth)
      << "\nlambda_l1=" << format_real(c.regularizer_weights.lambda_l1) << "\nseed=" << c.seed
      << "\nlattice_degree=" << c.lattice_degree
      << "\nlattice_padding=" << format_real(c.lattice_padding) << '\n';
}

double LossBreakdown::grad_norm() const {
  double sq = 0.0;
  for (const auto& g : grad) sq += g.squaredNorm();
  return std::sqrt(sq);
}

FitProblem::FitProblem(PointCloud template_cloud, PointCloud target, ControlLattice lattice,
                       RegularizerWeights weights, LossKind kind,
                       std::optional<Assignment> frozen_assignment)
    : template_(std::move(template_cloud)),
      target_(std::move(target)),
      lattice_(std::move(lattice)),
      reg_(weights),
      kind_(kind),
      frozen_(std::move(frozen_assignment)),
      weights_(compute_weights(lattice_, template_)),
      target_tree_(std::make_unique<KdTree>(target_.points())) {
  if (kind_ != LossKind::chamfer && template_.size() != target_.size()) {
    throw SizeMismatch(fmt::format("EMD loss needs equal point counts, got {} and {}",
                                   template_.size(), target_.size()));
  }
  if (kind_ == LossKind::emd_fixed) {
    if (!frozen_) throw std::invalid_argument("emd_fixed loss requires a frozen assignment");
    if (!is_bijection(frozen_->mapping, template_.size())) {
      throw std::invalid_argument("frozen assignment is not a bijection");
    }
  }
}

PointCloud FitProblem::deformed(const DeformationField& field) const {
  field.check_matches(lattice_);
  return deform(weights_, field, template_);
}

LossBreakdown FitProblem::evaluate(const DeformationField& field) const {
  const PointCloud moved = deformed(field);
  LossBreakdown out;
  std::vector<Vec3> point_grad;
  switch (kind_) {
    case LossKind::chamfer: {
      auto cd = chamfer_with_grad(moved, target_, *target_tree_);
      out.data = cd.value.sum();
      point_grad = std::move(cd.grad);
      break;
    }
    case LossKind::emd_fixed: {
      auto emd = emd_fixed_correspondence(moved, target_, *frozen_);
      out.data = emd.cost;
      point_grad = std::move(emd.grad);
      break;
    }
    case LossKind::emd_true: {
      auto emd = emd_fixed_correspondence(moved, target_, emd_exact(moved, target_));
      out.data = emd.cost;
      point_grad = std::move(emd.grad);
      break;
    }
  }

  const auto l1 = offset_l1(template_, moved);
  out.reg_l1 = l1.value;
  if (reg_.lambda_l1 > 0.0) {
    for (std::size_t a = 0; a < point_grad.size(); ++a) point_grad[a] += reg_.lambda_l1 * l1.grad[a];
  }

  out.grad = backprop_offsets(weights_, point_grad);
  auto smooth = lattice_smoothness(field, lattice_);
  out.reg_smooth = smooth.value;
  if (reg_.lambda_smooth > 0.0) {
    for (std::size_t c = 0; c < out.grad.size(); ++c) out.grad[c] += reg_.lambda_smooth * smooth.grad[c];
  }
  out.total = out.data + reg_.lambda_l1 * out.reg_l1 + reg_.lambda_smooth * out.reg_smooth;
  return out;
}

LossBreakdown total_loss(const PointCloud& template_cloud, const DeformationField& field,
                         const PointCloud& target, const ControlLattice& lattice,
                         const RegularizerWeights& weights, LossKind kind,
                         const std::optional<Assignment>& frozen_assignment) {
  field.check_matches(lattice);
  const FitProblem problem(template_cloud, target, lattice, weights, kind, frozen_assignment);
  return problem.evaluate(field);
}

std::vector<Vec3> adam_step(AdamState& state, std::span<const Vec3> gradients, double lr,
                            const AdamHyper& hyper) {
  if (state.first_moment.size() != gradients.size() || state.second_moment.size() != gradients.size()) {
    throw SizeMismatch(fmt::format("Adam state holds {} entries, got {} gradients",
                                   state.first_moment.size(), gradients.size()));
  }
  ++state.step_count;
  const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step_count));
  const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step_count));
  std::vector<Vec3> delta(gradients.size());
  for (std::size_t c = 0; c < gradients.size(); ++c) {
    const Vec3& g = gradients[c];
    Vec3& m = state.first_moment[c];
    Vec3& v = state.second_moment[c];
    m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
    v = hyper.beta2 * v + (1.0 - hyper.beta2) * g.cwiseProduct(g);
    const Vec3 m_hat = m / correction1;
    const Vec3 v_hat = v / correction2;
    delta[c] = -lr * m_hat.cwiseQuotient((v_hat.cwiseSqrt().array() + hyper.epsilon).matrix());
  }
  return delta;
}

void write_trace_csv(std::ostream& out, const FitTrace& trace) {
  out << "iter,total,data,reg_l1,reg_smooth,grad_norm\n";
  for (const auto& r : trace) {
    out << r.iteration << ',' << format_real(r.total) << ',' << format_real(r.data) << ','
        << format_real(r.reg_l1) << ',' << format_real(r.reg_smooth) << ','
        << format_real(r.grad_norm) << '\n';
  }
}

FitResult fit_deformation(const PointCloud& template_cloud, const PointCloud& target,
                          const ControlLattice& lattice, const FitConfig& config) {
  config.validate();
  std::optional<Assignment> frozen;
  if (config.loss == LossKind::emd_fixed) frozen = emd_exact(template_cloud, target);
  const FitProblem problem(template_cloud, target, lattice, config.regularizer_weights, config.loss,
                           std::move(frozen));

  FitResult result{DeformationField::zero(lattice.degrees()), {}, {}};
  result.trace.reserve(static_cast<std::size_t>(config.iterations));
  AdamState adam = AdamState::zeros(lattice.control_count());
  const AdamHyper hyper{config.adam_beta1, config.adam_beta2, config.adam_epsilon};

  for (int it = 0; it < config.iterations; ++it) {
    const LossBreakdown loss = problem.evaluate(result.field);
    const double grad_norm = loss.grad_norm();
    if (!std::isfinite(loss.total) || !std::isfinite(grad_norm)) {
      throw FitDiverged(fmt::format("non-finite loss at iteration {}", it), std::move(result.trace));
    }
    result.trace.push_back({it, loss.total, loss.data, loss.reg_l1, loss.reg_smooth, grad_norm});
    const auto delta = adam_step(adam, loss.grad, config.learning_rate(it), hyper);
    for (std::size_t c = 0; c < delta.size(); ++c) result.field.offsets[c] += delta[c];
  }
  result.final_loss = problem.evaluate(result.field);
  if (!std::isfinite(result.final_loss.total)) {
    throw FitDiverged("non-finite loss after the final update", std::move(result.trace));
  }
  return result;
}

}  // namespace ffdfit
