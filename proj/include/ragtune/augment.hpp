#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ragtune/corpus.hpp"
#include "ragtune/querygen.hpp"

namespace ragtune {

/// (query, positive answer, negative answers). The query is a generated
/// variant; the positive is the answer of the pair it was generated from.
struct TrainingTriple {
  std::string query_text;
  std::string positive_answer_id;
  std::vector<std::string> negative_answer_ids;
  /// Type of the generated query, when known. Used for per-type evaluation slices.
  std::optional<QueryType> query_type;

  friend bool operator==(const TrainingTriple&, const TrainingTriple&) = default;
};

struct TripleSet {
  std::vector<TrainingTriple> triples;
  std::string corpus_name;
  std::uint64_t seed = 0;

  friend bool operator==(const TripleSet&, const TripleSet&) = default;
};

/// A held-out query with its single relevant answer.
struct EvalQuery {
  std::string query_id;
  std::string query_text;
  std::string positive_answer_id;
  std::optional<QueryType> query_type;

  friend bool operator==(const EvalQuery&, const EvalQuery&) = default;
};

/// One triple per query. Negatives are n_neg distinct answers drawn uniformly
/// without replacement from every other corpus entry whose answer text differs
/// from the positive's; each query draws from its own seeded stream.
/// Throws CorpusTooSmall, DanglingQueryReference.
TripleSet mine_triples(std::span<const GeneratedQuery> queries, const Corpus& corpus, int n_neg,
                       std::uint64_t seed);

struct TriplePartition {
  TripleSet train;
  std::vector<EvalQuery> eval_queries;
};

/// Withholds holdout_per_pair queries of every contributing QA pair (seeded
/// choice) as evaluation queries. Throws InsufficientQueries when a pair has
/// no more than holdout_per_pair queries.
TriplePartition partition_triples(const TripleSet& tripleset, int holdout_per_pair, std::uint64_t seed);

/// Evaluation queries made of the corpus' own questions.
std::vector<EvalQuery> original_question_queries(const Corpus& corpus);

/// Checks the triple invariants against a corpus; throws on the first violation.
void validate_triples(const TripleSet& tripleset, const Corpus& corpus);

}  // namespace ragtune
