#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ragtune/augment.hpp"
#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"

namespace ragtune {

enum class Optimizer { Adam, Sgd };
std::string_view to_string(Optimizer opt) noexcept;
Optimizer parse_optimizer(std::string_view name);

/// Kingma & Ba defaults.
struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double tau = 0.05;
  bool use_inbatch_negatives = true;
  Optimizer optimizer = Optimizer::Adam;
  AdamParams adam;
  std::uint64_t seed = 0;

  /// Throws InvalidArgument on epochs < 1, tau <= 0, lr < 0, or
  /// batch_size < 2 with in-batch negatives.
  void validate() const;
};

struct AnswerRef {
  std::string id;
  std::string text;
  auto operator<=>(const AnswerRef&) const = default;
};

/// A triple with the answer texts looked up.
struct ResolvedTriple {
  std::string query;
  AnswerRef positive;
  std::vector<AnswerRef> negatives;
  auto operator<=>(const ResolvedTriple&) const = default;
};

std::vector<ResolvedTriple> resolve_triples(const TripleSet& tripleset, const Corpus& corpus);

/// Gradient restricted to the projection columns a batch touches.
struct SparseGradient {
  std::uint32_t emb_dim = 0;
  std::vector<std::uint32_t> features;  // ascending
  std::vector<double> values;           // features.size() * emb_dim, column after column

  std::span<const double> column(std::size_t k) const { return {values.data() + k * emb_dim, emb_dim}; }
  /// d loss / d projection(row, feature); 0 for untouched columns.
  double at(std::uint32_t row, std::uint32_t feature) const;
  double norm() const;
  SparseGradient& operator*=(double c);
};

struct LossOptions {
  double tau = 0.05;
  bool use_inbatch_negatives = true;
};

struct BatchLoss {
  double loss = 0.0;
  SparseGradient gradient;
};

/// Softmax contrastive loss over cosine similarities:
///   loss = -(1/n) sum_i log( exp(s_i+/tau) / (exp(s_i+/tau) + sum_{m in N_i} exp(s_im/tau)) )
/// N_i holds the triple's explicit negatives and, when enabled, the other
/// distinct positives of the batch (answers equal in id to the triple's own
/// positive are skipped). The gradient is exact with respect to the
/// projection, through both embedding normalizations. Triples are sorted
/// before reduction, so the result does not depend on their order.
/// Throws DegenerateText if any text embeds to the zero vector.
BatchLoss batch_loss(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                     const LossOptions& options);

/// Forward pass only.
double batch_loss_value(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                        const LossOptions& options);

struct GradientCheckOptions {
  double eps = 1e-5;
  std::size_t num_coords = 128;
  std::uint64_t seed = 0;
  LossOptions loss;
};

/// Max over a seeded sample of coordinates (drawn from the columns the batch
/// touches) of |analytic - numeric| / max(|numeric|, 1e-8), where numeric is
/// the central difference with step eps.
double gradient_check(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                      const GradientCheckOptions& options);

/// Same comparison for a caller-supplied gradient.
double compare_gradient(const EmbeddingModel& model, std::span<const ResolvedTriple> batch,
                        const SparseGradient& analytic, const GradientCheckOptions& options);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_grad_norm = 0.0;
  std::size_t batches = 0;
  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  double wall_time_seconds = 0.0;
  TrainConfig config;
  std::uint64_t seed = 0;
};

struct TrainResult {
  EmbeddingModel model;
  TrainLog log;
};

/// Shuffles with MT19937-64(derive(seed, epoch)) each epoch, then runs the
/// optimizer batch by batch. Adam is applied lazily: only columns present in a
/// batch gradient have their moments and values updated. Single-threaded and
/// bit-reproducible for identical inputs.
TrainResult train(EmbeddingModel model, std::span<const ResolvedTriple> triples, const TrainConfig& config);
TrainResult train(EmbeddingModel model, const TripleSet& tripleset, const Corpus& corpus,
                  const TrainConfig& config);

/// Line-oriented log: a header record with the config, then one record per
/// epoch. Wall time is left out so identical runs give identical files.
void write_train_log(const TrainLog& log, const std::filesystem::path& path);

}  // namespace ragtune
