#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ragtune/augment.hpp"
#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"
#include "ragtune/querygen.hpp"
#include "ragtune/retriever.hpp"

namespace ragtune {

/// Binary mode: one relevant doc per query. Graded mode: per-query doc grades;
/// a doc counts as relevant when its grade is > 0.
struct RelevanceJudgments {
  std::map<std::string, std::string> relevant;
  std::map<std::string, std::map<std::string, double>> grades;

  bool graded() const noexcept { return !grades.empty(); }
  /// Grade of doc for query (1/0 in binary mode). Throws MissingJudgment.
  double grade(const std::string& query_id, const std::string& doc_id) const;
  bool has(const std::string& query_id) const;

  static RelevanceJudgments from_eval_queries(std::span<const EvalQuery> queries);
};

/// Fraction of lists with a relevant doc in the top k.
double hit_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k);
/// Mean of 1/rank of the first relevant doc; 0 when it was not returned.
double mrr(std::span<const RankedList> ranked, const RelevanceJudgments& judgments);
/// Mean of (relevant docs in top k) / k.
double precision_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k);
/// Mean DCG@k / IDCG@k with gain 2^rel - 1 and discount log2(i + 1).
/// Throws ZeroIdealGain when a query has no positive grade.
double ndcg_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k);

struct TextPair {
  TokenSeq candidate;
  TokenSeq reference;
};

/// Tokenizes both texts with the embedder tokenizer.
TextPair make_text_pair(std::string_view candidate, std::string_view reference);

enum class Rouge1Mode { Recall, F1 };
std::string_view to_string(Rouge1Mode mode) noexcept;
Rouge1Mode parse_rouge1_mode(std::string_view name);

/// Clipped unigram matches over reference length (Recall), or the F1 of that
/// recall with the matching precision. Throws EmptyReference.
double rouge1(const TextPair& pair, Rouge1Mode mode = Rouge1Mode::Recall);

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

/// F = (1 + beta^2) R P / (beta^2 R + P) over LCS recall and precision.
/// Throws EmptyText.
double rouge_l(const TextPair& pair, double beta = 1.0);

struct BleuOptions {
  int max_n = 4;
  /// When set, every order up to max_n is included even if a text is shorter,
  /// so short texts score 0.
  bool strict = false;
};

struct NgramProfile {
  std::vector<std::size_t> matches;  // clipped matches per order 1..max_n
  std::vector<std::size_t> totals;   // candidate n-grams per order
  std::vector<double> precisions;    // p_n, 0 when totals is 0
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
  double brevity_penalty = 0.0;
};

NgramProfile ngram_profile(const TextPair& pair, int max_n);

struct BleuScores {
  /// scores[k - 1] is BLEU-k for k = 1..max_n.
  std::vector<double> scores;
  NgramProfile profile;
};

/// Modified n-gram precisions combined by a uniform-weight geometric mean over
/// N_eff = min(k, c, r) orders (k orders in strict mode), times the brevity
/// penalty 1 if c > r else exp(1 - r / c). No smoothing. Empty candidate
/// scores 0. Throws EmptyReference.
BleuScores bleu(const TextPair& pair, const BleuOptions& options = {});

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Greedy token matching with per-token embeddings and max(0, cosine)
/// similarity. Throws EmptyText.
BertScore bert_prf(const TextPair& pair, const EmbeddingModel& model);

inline constexpr std::size_t kFullDepth = std::numeric_limits<std::size_t>::max();

struct RetrievalReport {
  std::vector<std::size_t> k_set;
  std::size_t query_count = 0;
  double mrr = 0.0;
  std::map<std::size_t, double> hit;
  std::map<std::size_t, double> precision;
  std::map<std::size_t, double> ndcg;
  friend bool operator==(const RetrievalReport&, const RetrievalReport&) = default;
};

/// Returns the ranking for one query, with at most `depth` hits.
using Searcher = std::function<RankedList(const EvalQuery& query, std::size_t depth)>;

/// Ranks each query once at `depth` (the MRR depth; at least max(k_set)).
/// Throws EmptyEvalSet, InvalidArgument for an empty k set or k = 0.
RetrievalReport evaluate_retrieval(const Searcher& searcher, std::span<const EvalQuery> queries,
                                   std::span<const std::size_t> k_set, std::size_t depth = kFullDepth);
RetrievalReport evaluate_retrieval(const VectorIndex& index, const EmbeddingModel& model,
                                   std::span<const EvalQuery> queries, std::span<const std::size_t> k_set);
RetrievalReport evaluate_retrieval(const Bm25Index& index, std::span<const EvalQuery> queries,
                                   std::span<const std::size_t> k_set);
/// The metric families over rankings produced elsewhere.
RetrievalReport retrieval_report(std::span<const RankedList> ranked, const RelevanceJudgments& judgments,
                                 std::span<const std::size_t> k_set);

struct TextMetricOptions {
  Rouge1Mode rouge1_mode = Rouge1Mode::Recall;
  double rouge_l_beta = 1.0;
  BleuOptions bleu;
};

struct GenerationReport {
  std::size_t item_count = 0;
  double rouge1 = 0.0;
  double rouge_l = 0.0;
  std::vector<double> bleu;  // BLEU-1..max_n
  double bert_p = 0.0;
  double bert_r = 0.0;
  double bert_f1 = 0.0;
  friend bool operator==(const GenerationReport&, const GenerationReport&) = default;
};

/// Macro-averages every metric over items in ascending id order. An empty
/// prediction scores 0 on every metric. Throws IdSetMismatch, EmptyEvalSet,
/// EmptyReference.
GenerationReport evaluate_generation(const std::map<std::string, std::string>& predictions,
                                     const std::map<std::string, std::string>& references,
                                     const EmbeddingModel& model, const TextMetricOptions& options = {});

struct DiversityRow {
  std::string qa_id;
  QueryType query_type;
  double distance = 0.0;
};

struct DiversityTable {
  std::vector<DiversityRow> rows;
  std::map<QueryType, double> type_means;
};

/// Cosine distance 1 - cos between each generated query and its source
/// question. Writes CSV rows "qa_id,query_type,distance" followed by one
/// "#mean,<type>,<mean>" row per type when out_path is non-empty.
/// Throws DanglingQueryReference.
DiversityTable diversity_report(std::span<const GeneratedQuery> generated, const Corpus& corpus,
                                const EmbeddingModel& model, const std::filesystem::path& out_path = {});

/// One JSON object on a single line; keys sorted, k-indexed metrics named
/// like "hit@3".
std::string report_record(const RetrievalReport& report, std::string_view label);
std::string report_record(const GenerationReport& report, std::string_view label);
/// Aligned plain-text tables with one row per labelled report.
std::string report_table(std::span<const std::pair<std::string, RetrievalReport>> rows);
std::string report_table(std::span<const std::pair<std::string, GenerationReport>> rows);

}  // namespace ragtune
