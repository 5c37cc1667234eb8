#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ragtune/corpus.hpp"

namespace ragtune {

enum class QueryType { ConceptSeeking, FactSeeking, Keyword, Misspelled, WebSearch };

inline constexpr std::array<QueryType, 5> kAllQueryTypes = {
    QueryType::ConceptSeeking, QueryType::FactSeeking, QueryType::Keyword,
    QueryType::Misspelled, QueryType::WebSearch};

/// "concept_seeking", "fact_seeking", "keyword", "misspelled", "web_search".
std::string_view to_string(QueryType type) noexcept;
/// Accepts the names above; throws InvalidArgument otherwise.
QueryType parse_query_type(std::string_view name);

enum class QueryOrigin { Llm, Synthetic };
std::string_view to_string(QueryOrigin origin) noexcept;
QueryOrigin parse_query_origin(std::string_view name);

struct GeneratedQuery {
  std::string source_qa_id;
  QueryType query_type = QueryType::ConceptSeeking;
  std::string text;
  QueryOrigin origin = QueryOrigin::Synthetic;

  friend bool operator==(const GeneratedQuery&, const GeneratedQuery&) = default;
};

struct DecodingParams {
  double temperature = 0.7;
  int max_output_tokens = 512;
};

/// Chat-style completion backend used for query generation. Implementations
/// must be safe to call from several threads at once.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                               const DecodingParams& decoding) = 0;
};

/// Deterministic client for tests: delegates to a callback.
class StubGenerationClient : public GenerationClient {
 public:
  using Fn = std::function<std::string(const std::string& system_prompt, const std::string& user_prompt)>;
  explicit StubGenerationClient(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& system_prompt, const std::string& user_prompt,
                       const DecodingParams&) override {
    return fn_(system_prompt, user_prompt);
  }

 private:
  Fn fn_;
};

enum class PromptLanguage { English, Chinese };

/// System instruction sent with every generation prompt.
std::string_view generation_system_prompt() noexcept;

/// The query-generation template for `type` with [context_str] replaced by
/// "Q: <question>\nA: <answer>" and the K placeholder by k_per_type.
std::string render_prompt(QueryType type, const QAPair& qa, int k_per_type,
                          PromptLanguage language = PromptLanguage::English);

/// Unfilled template text, byte-stable.
std::string_view prompt_template(QueryType type, PromptLanguage language = PromptLanguage::English);

/// Extracts up to expected_k queries from a numbered or line-separated list.
/// List markers and wrapping quotes are stripped and duplicates dropped.
/// Throws NoQueriesFound when nothing parseable remains.
std::vector<std::string> parse_generated(std::string_view raw, int expected_k);

struct GenerationFailure {
  std::string qa_id;
  QueryType query_type;
  std::string message;
};

struct GenerationResult {
  std::vector<GeneratedQuery> queries;
  std::vector<GenerationFailure> failures;
  /// Number of queries per QA pair, in corpus order.
  std::vector<std::pair<std::string, std::size_t>> per_pair_counts;
};

struct GenerationOptions {
  int k_per_type = 3;
  DecodingParams decoding;
  PromptLanguage language = PromptLanguage::English;
  /// Upper bound on in-flight client calls.
  std::size_t max_concurrency = 4;
};

/// One render/complete/parse round per (QA pair, type). Output order is
/// (corpus index, type order, item index) regardless of completion order.
/// Client errors are collected per cell; throws AllFailed if nothing came back.
GenerationResult generate_queries(const Corpus& corpus, const std::set<QueryType>& types,
                                  GenerationClient& client, const GenerationOptions& options = {});

/// Rule-based stand-in for the LLM, pure in (qa, type, seed):
///  - ConceptSeeking prepends an abstract interrogative frame;
///  - FactSeeking asks for a single fact about a short window of content words;
///  - Keyword keeps content tokens only;
///  - Misspelled swaps one adjacent pair of distinct letters;
///  - WebSearch keeps a lowercase run of tokens holding at most 6 content tokens.
/// Throws EmptyQuestion when the question has no tokens.
GeneratedQuery synthesize_query(const QAPair& qa, QueryType type, std::uint64_t seed);

/// k_per_type synthetic queries per (pair, type) with per-item seeds; exact
/// duplicates within a cell are dropped.
GenerationResult synthesize_queries(const Corpus& corpus, const std::set<QueryType>& types,
                                    int k_per_type, std::uint64_t seed);

/// Function words dropped by the Keyword and WebSearch rules.
bool is_stopword(std::string_view token);
const std::vector<std::string_view>& latin_stopwords();
const std::vector<std::string_view>& han_function_characters();

}  // namespace ragtune
