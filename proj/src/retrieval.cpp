#include "ffdfit/retrieval.hpp"

#include "ffdfit/errors.hpp"
#include "ffdfit/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace ffdfit {
namespace {

double read_real(std::istream& in, std::size_t line, const char* what) {
  double value = 0.0;
  if (!(in >> value) || !std::isfinite(value)) throw ParseError(std::string("expected ") + what, line);
  return value;
}

}  // namespace

Feature shape_descriptor(const PointCloud& pc, const DescriptorOptions& options) {
  if (options.bins < 2) throw std::invalid_argument("descriptor needs at least 2 bins");
  const PointCloud cloud = normalize_for_eval(pc).cloud;

  Feature out = Feature::Zero(options.bins + kMomentCount);
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
  // Normalized clouds fit in the unit ball, so pair distances lie in [0, 2].
  constexpr double kMaxDistance = 2.0;
  for (std::size_t s = 0; s < options.pairs; ++s) {
    const std::size_t a = pick(rng);
    const std::size_t b = pick(rng);
    const double d = (cloud[a] - cloud[b]).norm();
    const int bin = std::min(options.bins - 1, static_cast<int>(d / kMaxDistance * options.bins));
    out[bin] += 1.0;
  }
  if (options.pairs > 0) out.head(options.bins) /= static_cast<double>(options.pairs);

  Eigen::Matrix<double, kMomentCount, 1> moments = Eigen::Matrix<double, kMomentCount, 1>::Zero();
  for (const auto& p : cloud) {
    const double x = p.x(), y = p.y(), z = p.z();
    moments[0] += x * x;
    moments[1] += y * y;
    moments[2] += z * z;
    moments[3] += x * y;
    moments[4] += x * z;
    moments[5] += y * z;
    moments[6] += x * x + z * z;
    moments[7] += p.squaredNorm();
  }
  out.tail(kMomentCount) = moments / static_cast<double>(cloud.size());
  return out;
}

void EmbeddingBatch::validate() const {
  if (features.size() < 2) throw std::invalid_argument("embedding batch needs at least 2 items");
  if (labels.size() != features.size()) throw SizeMismatch("one label per feature required");
  if (!instances.empty() && instances.size() != features.size()) {
    throw SizeMismatch("instance ids must be empty or one per feature");
  }
  const auto dim = features.front().size();
  for (const auto& f : features) {
    if (f.size() != dim) throw SizeMismatch("features differ in dimension");
  }
}

bool EmbeddingBatch::is_positive_pair(std::size_t i, std::size_t j) const {
  if (i == j) return false;
  if (!instances.empty()) return instances[i] == instances[j] && labels[i] == labels[j];
  return labels[i] == labels[j];
}

Eigen::MatrixXd pairwise_distances(const EmbeddingBatch& batch) {
  batch.validate();
  const std::size_t n = batch.size();
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dist = (batch.features[i] - batch.features[j]).norm();
      d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = dist;
      d(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = dist;
    }
  return d;
}

LiftedLoss lifted_loss(const EmbeddingBatch& batch, double margin) {
  const Eigen::MatrixXd d = pairwise_distances(batch);
  const std::size_t n = batch.size();
  auto dist = [&](std::size_t a, std::size_t b) {
    return d(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  };

  std::vector<std::pair<std::size_t, std::size_t>> positives;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (batch.is_positive_pair(i, j)) positives.emplace_back(i, j);
  if (positives.empty()) throw std::invalid_argument("lifted loss needs at least one positive pair");

  LiftedLoss out;
  out.positive_pairs = positives.size();
  const auto dim = batch.features.front().size();
  out.grad.assign(n, Feature::Zero(dim));
  const double scale = 1.0 / static_cast<double>(positives.size());

  // Accumulates coeff * d(dist(a,b))/d(features) into the gradient.
  auto add_distance_grad = [&](std::size_t a, std::size_t b, double coeff) {
    const double dab = dist(a, b);
    if (dab <= 0.0) return;
    const Feature unit = (batch.features[a] - batch.features[b]) / dab;
    out.grad[a] += coeff * unit;
    out.grad[b] -= coeff * unit;
  };

  struct Term {
    std::size_t anchor, other;
    double exponent;
  };
  std::vector<Term> terms;
  for (const auto& [i, j] : positives) {
    terms.clear();
    for (std::size_t anchor : {i, j}) {
      for (std::size_t k = 0; k < n; ++k) {
        if (batch.labels[k] != batch.labels[anchor]) terms.push_back({anchor, k, margin - dist(anchor, k)});
      }
    }
    if (terms.empty()) {
      throw std::invalid_argument(fmt::format("positive pair ({}, {}) has no negatives", i, j));
    }
    double max_exp = -std::numeric_limits<double>::infinity();
    for (const auto& t : terms) max_exp = std::max(max_exp, t.exponent);
    double sum = 0.0;
    for (const auto& t : terms) sum += std::exp(t.exponent - max_exp);
    const double log_sum = max_exp + std::log(sum);
    const double inner = log_sum + dist(i, j);
    if (inner <= 0.0) continue;

    out.value += 0.5 * scale * inner * inner;
    const double coeff = scale * inner;
    add_distance_grad(i, j, coeff);
    for (const auto& t : terms) {
      const double softmax = std::exp(t.exponent - log_sum);
      add_distance_grad(t.anchor, t.other, -coeff * softmax);
    }
  }
  return out;
}

MarginViolations triplet_margin_violations(const EmbeddingBatch& batch, double margin) {
  const Eigen::MatrixXd d = pairwise_distances(batch);
  const std::size_t n = batch.size();
  MarginViolations out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || batch.labels[i] != batch.labels[j]) continue;
      for (std::size_t k = 0; k < n; ++k) {
        if (batch.labels[k] == batch.labels[i]) continue;
        const auto ii = static_cast<Eigen::Index>(i);
        if (!(d(ii, static_cast<Eigen::Index>(j)) + margin < d(ii, static_cast<Eigen::Index>(k)))) {
          out.triples.push_back({i, j, k});
        }
      }
    }
  out.count = out.triples.size();
  return out;
}

EncoderParams EncoderParams::random(int out_dim, int in_dim, std::uint64_t seed) {
  if (out_dim < 2 || in_dim < 1) throw std::invalid_argument("encoder needs D >= 2 and D_in >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
  EncoderParams p;
  p.weight.resize(out_dim, in_dim);
  for (Eigen::Index r = 0; r < p.weight.rows(); ++r)
    for (Eigen::Index c = 0; c < p.weight.cols(); ++c) p.weight(r, c) = normal(rng);
  p.bias = Eigen::VectorXd::Zero(out_dim);
  return p;
}

EncoderParams EncoderParams::identity(int dim) {
  if (dim < 2) throw std::invalid_argument("encoder needs D >= 2");
  return {Eigen::MatrixXd::Identity(dim, dim), Eigen::VectorXd::Zero(dim)};
}

Feature EncoderParams::embed(const Feature& x) const {
  if (x.size() != weight.cols()) {
    throw SizeMismatch(fmt::format("encoder expects {} inputs, got {}", weight.cols(), x.size()));
  }
  return weight * x + bias;
}

void EncoderParams::validate() const {
  if (weight.rows() < 2) throw std::invalid_argument("encoder output dimension must be >= 2");
  if (bias.size() != weight.rows()) throw SizeMismatch("bias length must equal output dimension");
  if (!weight.allFinite() || !bias.allFinite()) throw std::invalid_argument("non-finite encoder parameter");
}

std::uint64_t EncoderParams::fingerprint() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  };
  const std::int64_t dims[2] = {weight.rows(), weight.cols()};
  mix(dims, sizeof dims);
  for (Eigen::Index r = 0; r < weight.rows(); ++r)
    for (Eigen::Index c = 0; c < weight.cols(); ++c) {
      const double v = weight(r, c);
      mix(&v, sizeof v);
    }
  for (Eigen::Index r = 0; r < bias.size(); ++r) {
    const double v = bias[r];
    mix(&v, sizeof v);
  }
  return h;
}

void write_params(std::ostream& out, const EncoderParams& params) {
  out << params.weight.rows() << ' ' << params.weight.cols() << '\n';
  for (Eigen::Index r = 0; r < params.weight.rows(); ++r) {
    for (Eigen::Index c = 0; c < params.weight.cols(); ++c) {
      out << (c ? " " : "") << format_real(params.weight(r, c));
    }
    out << '\n';
  }
  for (Eigen::Index r = 0; r < params.bias.size(); ++r) out << (r ? " " : "") << format_real(params.bias[r]);
  out << '\n';
}

EncoderParams parse_params(std::istream& in) {
  long rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 2 || cols < 1) {
    throw ParseError("expected encoder header 'D D_in' with D >= 2", 1);
  }
  EncoderParams p;
  p.weight.resize(rows, cols);
  p.bias.resize(rows);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c) p.weight(r, c) = read_real(in, 0, "weight value");
  for (long r = 0; r < rows; ++r) p.bias[r] = read_real(in, 0, "bias value");
  return p;
}

void save_params(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_params(out, params);
}

EncoderParams load_params(const std::filesystem::path& path) {
  require_file(path);
  std::ifstream in(path);
  return parse_params(in);
}

EmbeddingBatch embed_batch(const EmbeddingBatch& descriptors, const EncoderParams& params) {
  EmbeddingBatch out{{}, descriptors.labels, descriptors.instances};
  out.features.reserve(descriptors.size());
  for (const auto& x : descriptors.features) out.features.push_back(params.embed(x));
  return out;
}

namespace {
constexpr double kMaxGradNorm = 1.0;
}

TrainResult train_encoder(const std::vector<EmbeddingBatch>& descriptor_batches,
                          const EncoderParams& initial, const TrainOptions& options) {
  if (descriptor_batches.empty()) throw std::invalid_argument("no training batches");
  std::set<int> classes;
  for (const auto& b : descriptor_batches) {
    b.validate();
    classes.insert(b.labels.begin(), b.labels.end());
  }
  if (classes.size() < 2) throw std::invalid_argument("training needs at least two classes");
  initial.validate();

  // Descent runs in per-dimension standardized coordinates z = (x - mean) / scale; the
  // encoder W z + c is mapped back to W' = W diag(1/scale), b' = c - W' mean afterwards.
  std::size_t count = 0;
  const Eigen::Index in_dim = initial.weight.cols();
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(in_dim), sq = Eigen::VectorXd::Zero(in_dim);
  for (const auto& b : descriptor_batches)
    for (const auto& x : b.features) {
      if (x.size() != in_dim) throw SizeMismatch("descriptor dimension does not match the encoder");
      mean += x;
      ++count;
    }
  mean /= static_cast<double>(count);
  for (const auto& b : descriptor_batches)
    for (const auto& x : b.features) sq += (x - mean).cwiseAbs2();
  Eigen::VectorXd scale = (sq / static_cast<double>(count)).cwiseSqrt();
  for (Eigen::Index d = 0; d < in_dim; ++d)
    if (!(scale[d] > 1e-12)) scale[d] = 1.0;

  std::vector<EmbeddingBatch> standardized = descriptor_batches;
  for (auto& b : standardized)
    for (auto& x : b.features) x = (x - mean).cwiseQuotient(scale);

  EncoderParams params = initial;
  params.bias = initial.bias + initial.weight * mean;
  params.weight = initial.weight * scale.asDiagonal();

  TrainResult result{initial, {}};
  bool updated = false;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(standardized.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t b : order) {
      const auto& batch = standardized[b];
      const LiftedLoss loss = lifted_loss(embed_batch(batch, params), options.margin);
      loss_sum += loss.value;
      if (loss.value <= 0.0) continue;
      Eigen::MatrixXd grad_w = Eigen::MatrixXd::Zero(params.weight.rows(), params.weight.cols());
      Eigen::VectorXd grad_b = Eigen::VectorXd::Zero(params.bias.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        grad_w.noalias() += loss.grad[i] * batch.features[i].transpose();
        grad_b += loss.grad[i];
      }
      const double norm = std::sqrt(grad_w.squaredNorm() + grad_b.squaredNorm());
      const double step = options.learning_rate * (norm > kMaxGradNorm ? kMaxGradNorm / norm : 1.0);
      params.weight -= step * grad_w;
      params.bias -= step * grad_b;
      updated = true;
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(standardized.size()));
  }
  if (updated) {
    result.params.weight = params.weight * scale.cwiseInverse().asDiagonal();
    result.params.bias = params.bias - result.params.weight * mean;
  }
  return result;
}

void TemplateDatabase::add(std::string id, Feature descriptor, std::filesystem::path cloud_path) {
  if (id.empty() || id.find_first_of(" \t\n") != std::string::npos) {
    throw std::invalid_argument("template id must be a non-empty token: '" + id + "'");
  }
  for (const auto& e : entries_) {
    if (e.id == id) throw std::invalid_argument("duplicate template id '" + id + "'");
  }
  if (!entries_.empty() && entries_.front().descriptor.size() != descriptor.size()) {
    throw SizeMismatch("descriptor dimension differs from the rest of the database");
  }
  entries_.push_back({std::move(id), std::move(descriptor), Feature{}, std::move(cloud_path)});
  embedded_ = false;
}

void TemplateDatabase::embed(const EncoderParams& params) {
  params.validate();
  for (auto& e : entries_) e.embedding = params.embed(e.descriptor);
  fingerprint_ = params.fingerprint();
  embedded_ = true;
}

const TemplateEntry& TemplateDatabase::find(const std::string& id) const {
  for (const auto& e : entries_) {
    if (e.id == id) return e;
  }
  throw std::out_of_range("no template with id '" + id + "'");
}

void TemplateDatabase::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "descriptors");
  std::ofstream index(dir / "index.txt");
  if (!index) throw std::runtime_error("cannot write " + (dir / "index.txt").string());
  for (const auto& e : entries_) {
    const fs::path desc_rel = fs::path("descriptors") / (e.id + ".txt");
    std::ofstream desc(dir / desc_rel);
    for (Eigen::Index i = 0; i < e.descriptor.size(); ++i) {
      desc << (i ? " " : "") << format_real(e.descriptor[i]);
    }
    desc << '\n';
    const fs::path cloud_rel = e.cloud_path.is_absolute()
                                   ? fs::proximate(e.cloud_path, fs::absolute(dir))
                                   : e.cloud_path;
    index << e.id << ' ' << desc_rel.generic_string() << ' ' << cloud_rel.generic_string() << '\n';
  }
}

TemplateDatabase TemplateDatabase::load(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.txt";
  require_file(index_path);
  std::ifstream index(index_path);
  TemplateDatabase db;
  std::string text;
  std::size_t line = 0;
  while (std::getline(index, text)) {
    ++line;
    std::istringstream fields(text);
    std::string id, desc_file, cloud_file;
    if (!(fields >> id)) continue;
    if (!(fields >> desc_file >> cloud_file)) {
      throw ParseError("expected 'id descriptor-file cloud-file'", line);
    }
    require_file(dir / desc_file);
    std::ifstream desc(dir / desc_file);
    std::vector<double> values;
    double v = 0.0;
    while (desc >> v) values.push_back(v);
    if (values.empty()) throw ParseError("empty descriptor file " + desc_file, line);
    db.add(id, Eigen::Map<Feature>(values.data(), static_cast<Eigen::Index>(values.size())),
           dir / cloud_file);
  }
  return db;
}

std::vector<RetrievalMatch> knn_retrieve(const Feature& query_descriptor, const TemplateDatabase& db,
                                         const EncoderParams& params, std::size_t k) {
  if (db.empty()) throw std::invalid_argument("template database is empty");
  if (k == 0 || k > db.size()) {
    throw std::invalid_argument(fmt::format("K={} outside [1, {}]", k, db.size()));
  }
  const bool cached = db.embedded() && db.params_fingerprint() == params.fingerprint();
  const Feature query = params.embed(query_descriptor);
  std::vector<RetrievalMatch> all;
  all.reserve(db.size());
  for (const auto& e : db.entries()) {
    const Feature emb = cached ? e.embedding : params.embed(e.descriptor);
    all.push_back({e.id, (emb - query).norm()});
  }
  auto closer = [](const RetrievalMatch& a, const RetrievalMatch& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
  all.resize(k);
  return all;
}

}  // namespace ffdfit
