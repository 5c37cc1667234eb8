#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ragtune/augment.hpp"
#include "ragtune/chat_client.hpp"
#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"
#include "ragtune/error.hpp"
#include "ragtune/metrics.hpp"
#include "ragtune/querygen.hpp"
#include "ragtune/ragpipe.hpp"
#include "ragtune/trainer.hpp"

namespace ragtune {

enum class QuerySource { Synthetic, Llm };
enum class GeneratorKind { Echo, Chat };

/// Everything a run needs. Serialized as JSON; see docs/config.md.
struct PipelineConfig {
  // paths
  std::filesystem::path corpus_path = "data/synthetic_corpus.jsonl";
  std::filesystem::path output_dir = "runs/default";
  /// Optional starting model; a fresh init_model() is used when empty.
  std::filesystem::path initial_model;

  // stage toggles
  bool run_bm25_baseline = true;
  bool run_type_slices = true;
  bool run_rag_eval = true;

  std::uint64_t seed = 42;

  // generate
  QuerySource query_source = QuerySource::Synthetic;
  std::set<QueryType> query_types = {kAllQueryTypes.begin(), kAllQueryTypes.end()};
  int k_per_type = 3;
  PromptLanguage prompt_language = PromptLanguage::English;
  ChatEndpoint query_endpoint;
  DecodingParams query_decoding;
  std::size_t max_concurrency = 4;

  // mine / partition
  int n_neg = 1;
  int holdout_per_pair = 2;

  // model / train
  std::uint32_t feat_dim = EmbeddingModel::kDefaultFeatDim;
  std::uint32_t emb_dim = EmbeddingModel::kDefaultEmbDim;
  std::uint64_t hash_seed = 0;
  TrainConfig train;

  // evaluate
  std::vector<std::size_t> k_set = {1, 3};
  std::size_t rag_k = kDefaultRagK;
  std::size_t max_input_tokens = kDefaultMaxInputTokens;
  GeneratorKind generator = GeneratorKind::Echo;
  ChatEndpoint generator_endpoint;
  DecodingParams generator_decoding;
  TextMetricOptions text_metrics;

  // ablation acceptance thresholds
  double min_hit1_delta = 0.20;
  double min_mrr_delta = 0.15;

  /// Throws InvalidArgument.
  void validate() const;
  std::string to_json() const;
  static PipelineConfig from_json(std::string_view text);
};

PipelineConfig load_pipeline_config(const std::filesystem::path& path);
void save_pipeline_config(const PipelineConfig& config, const std::filesystem::path& path);

/// Seed for a named stage, derived from the run seed.
std::uint64_t stage_seed(const PipelineConfig& config, std::string_view stage);

/// Error raised by run_pipeline/run_ablation: subject() is the stage name,
/// cause() the code of the underlying failure.
class StageError : public Error {
 public:
  StageError(std::string stage, Errc cause, const std::string& message);
  Errc cause() const noexcept { return cause_; }

 private:
  Errc cause_;
};

struct Artifact {
  std::string path;  // relative to the output directory
  std::string checksum;  // XXH64 of the file, 16 hex digits
};

struct StageRecord {
  std::string stage;
  std::vector<Artifact> artifacts;
};

struct RunManifest {
  std::vector<StageRecord> stages;
  std::string config_json;
};

struct ArmReport {
  RetrievalReport retrieval;
  std::optional<GenerationReport> generation;
};

struct PipelineResult {
  RunManifest manifest;
  ArmReport dense;
  std::optional<RetrievalReport> bm25;
};

/// generate -> mine -> partition -> train -> index -> evaluate, writing each
/// stage's files into output_dir and finally manifest.json. Files from stages
/// that completed stay in place when a later stage fails.
/// Throws StageError(stage, cause).
PipelineResult run_pipeline(const PipelineConfig& config);

struct AblationReport {
  ArmReport untrained;
  ArmReport finetuned;
  /// finetuned - untrained per metric, keyed like "hit@1" or "bleu1".
  std::map<std::string, double> deltas;
  bool meets_thresholds = false;
};

/// Evaluates the initial model and the fine-tuned model on the same held-out
/// queries, corpus and index procedure. train.epochs = 0 skips training, so
/// both arms coincide. Writes ablation.jsonl and ablation.txt.
AblationReport run_ablation(const PipelineConfig& config);

/// Dense retrieval (and, when enabled, RAG generation) metrics for one model.
ArmReport evaluate_arm(const EmbeddingModel& model, const Corpus& corpus, std::span<const EvalQuery> eval_queries,
                       const PipelineConfig& config);

std::unique_ptr<GeneratorClient> make_generator(const PipelineConfig& config);

std::string hex64(std::uint64_t value);
std::string file_checksum(const std::filesystem::path& path);

}  // namespace ragtune
