#pragma once

#include "ffdfit/geometry.hpp"

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace ffdfit {

using Feature = Eigen::VectorXd;

struct DescriptorOptions {
  int bins = 64;
  std::size_t pairs = 4096;
  std::uint64_t seed = 0;
};

inline constexpr int kMomentCount = 8;

// D2 histogram (`bins` normalized counts of distances between random point
// pairs over [0, 2]) followed by 8 second moments
// (xx, yy, zz, xy, xz, yz, x^2+z^2, |p|^2). The cloud is normalized first.
Feature shape_descriptor(const PointCloud& pc, const DescriptorOptions& options = {});

// Features with their class labels. When `instances` is non-empty, positive
// pairs are items sharing an instance id; otherwise items sharing a label.
struct EmbeddingBatch {
  std::vector<Feature> features;
  std::vector<int> labels;
  std::vector<int> instances;

  std::size_t size() const { return features.size(); }
  // Throws std::invalid_argument unless B >= 2 and all dimensions agree.
  void validate() const;
  bool is_positive_pair(std::size_t i, std::size_t j) const;
};

Eigen::MatrixXd pairwise_distances(const EmbeddingBatch& batch);

struct LiftedLoss {
  double value = 0.0;
  std::vector<Feature> grad;  // d value / d feature_i
  std::size_t positive_pairs = 0;
};

// Smoothed lifted-structured loss
//   1/(2|P|) sum_(i,j in P) [log(sum_(k in N_i) e^(margin - d_ik)
//                               + sum_(l in N_j) e^(margin - d_jl)) + d_ij]_+^2
// where N_i holds items whose label differs from i's.
LiftedLoss lifted_loss(const EmbeddingBatch& batch, double margin);

struct MarginViolations {
  std::size_t count = 0;
  std::vector<std::array<std::size_t, 3>> triples;  // (i, j, k)
};

// Ordered triples with label(i) == label(j) != label(k), i != j, for which
// d_ij + margin < d_ik does not hold.
MarginViolations triplet_margin_violations(const EmbeddingBatch& batch, double margin);

// Linear encoder f(x) = W x + b.
struct EncoderParams {
  Eigen::MatrixXd weight;  // D x D_in
  Eigen::VectorXd bias;    // D

  static EncoderParams random(int out_dim, int in_dim, std::uint64_t seed);
  static EncoderParams identity(int dim);

  Feature embed(const Feature& x) const;
  int input_dim() const { return static_cast<int>(weight.cols()); }
  int output_dim() const { return static_cast<int>(weight.rows()); }
  void validate() const;
  // FNV-1a over the parameter bytes; identifies the version embeddings came from.
  std::uint64_t fingerprint() const;
};

// "D D_in" header, then the weights row-major, then the bias.
void write_params(std::ostream& out, const EncoderParams& params);
EncoderParams parse_params(std::istream& in);
void save_params(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_params(const std::filesystem::path& path);

// Descriptors and labels for training; features here are raw descriptors.
struct TrainOptions {
  double margin = 1.0;
  int epochs = 200;
  double learning_rate = 0.25;  // step length before clipping the gradient norm to 1
  std::uint64_t seed = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<double> epoch_loss;  // mean batch loss per epoch, before that epoch's updates
};

// Gradient descent on the lifted loss through the linear encoder. Batches are
// visited in a seeded order each epoch.
TrainResult train_encoder(const std::vector<EmbeddingBatch>& descriptor_batches,
                          const EncoderParams& initial, const TrainOptions& options);

EmbeddingBatch embed_batch(const EmbeddingBatch& descriptors, const EncoderParams& params);

struct TemplateEntry {
  std::string id;
  Feature descriptor;
  Feature embedding;
  std::filesystem::path cloud_path;
};

class TemplateDatabase {
 public:
  void add(std::string id, Feature descriptor, std::filesystem::path cloud_path);
  // Recomputes every embedding with `params`.
  void embed(const EncoderParams& params);

  const std::vector<TemplateEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const TemplateEntry& find(const std::string& id) const;
  // Fingerprint of the params the stored embeddings came from, if any.
  bool embedded() const { return embedded_; }
  std::uint64_t params_fingerprint() const { return fingerprint_; }

  // Directory layout: index.txt ("id descriptor-file cloud-file", paths
  // relative to the directory) plus one whitespace-separated descriptor file per entry.
  void save(const std::filesystem::path& dir) const;
  static TemplateDatabase load(const std::filesystem::path& dir);

 private:
  std::vector<TemplateEntry> entries_;
  std::uint64_t fingerprint_ = 0;
  bool embedded_ = false;
};

struct RetrievalMatch {
  std::string id;
  double distance;
};

inline constexpr std::size_t kDefaultRetrievalK = 5;

// Exact K nearest entries by embedding distance, ties broken by id. Stored
// embeddings are used only when they came from `params`.
std::vector<RetrievalMatch> knn_retrieve(const Feature& query_descriptor, const TemplateDatabase& db,
                                         const EncoderParams& params, std::size_t k);

}  // namespace ffdfit
