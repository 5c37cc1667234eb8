#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ragtune/augment.hpp"
#include "ragtune/chat_client.hpp"
#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"
#include "ragtune/error.hpp"
#include "ragtune/metrics.hpp"
#include "ragtune/querygen.hpp"
#include "ragtune/retriever.hpp"

namespace ragtune {

inline constexpr std::size_t kDefaultMaxInputTokens = 4096;
inline constexpr std::size_t kDefaultRagK = 3;

/// The fixed system instruction of the connected prompt.
std::string_view rag_system_prompt() noexcept;

struct ContextDoc {
  std::string doc_id;
  std::string text;
};

struct PromptBundle {
  std::string system_text;
  std::string user_text;
  std::vector<std::string> included_doc_ids;
  std::vector<std::string> included_contexts;
  bool truncated = false;
  /// Tokens of system_text plus user_text, by the project tokenizer.
  std::size_t token_count = 0;
  friend bool operator==(const PromptBundle&, const PromptBundle&) = default;
};

/// User text is "Question: <query>\nContext: <c1>\n\n<c2>...". Contexts are
/// dropped whole from the tail until the token count fits.
/// Throws QueryAloneExceedsCap.
PromptBundle assemble_prompt(std::string_view query, std::span<const ContextDoc> docs,
                             std::size_t max_input_tokens = kDefaultMaxInputTokens);

std::size_t prompt_token_count(std::string_view system_text, std::string_view user_text);

class GeneratorClient {
 public:
  virtual ~GeneratorClient() = default;
  /// Must be safe to call concurrently.
  virtual std::string complete(const PromptBundle& prompt, const DecodingParams& decoding) = 0;
};

/// Returns the first included context verbatim, or "" when there is none.
class EchoGeneratorClient : public GeneratorClient {
 public:
  std::string complete(const PromptBundle& prompt, const DecodingParams& decoding) override;
};

/// Sends the bundle's system and user text to a chat-completion backend.
class ChatGeneratorClient : public GeneratorClient {
 public:
  explicit ChatGeneratorClient(GenerationClient& chat) : chat_(chat) {}
  std::string complete(const PromptBundle& prompt, const DecodingParams& decoding) override;

 private:
  GenerationClient& chat_;
};

struct RagAnswer {
  std::string query;
  RankedList hits;
  PromptBundle prompt;
  std::string answer_text;
  std::uint64_t latency_ms = 0;
};

/// Raised when the generator fails; keeps the retrieval result and the prompt
/// so the call can be replayed.
class GeneratorFailure : public Error {
 public:
  GeneratorFailure(PromptBundle prompt, RankedList hits, const std::string& cause);
  const PromptBundle& prompt() const noexcept { return prompt_; }
  const RankedList& hits() const noexcept { return hits_; }

 private:
  PromptBundle prompt_;
  RankedList hits_;
};

struct RagOptions {
  std::size_t k = kDefaultRagK;
  std::size_t max_input_tokens = kDefaultMaxInputTokens;
  DecodingParams decoding;
};

/// search -> assemble_prompt -> complete. A degenerate query yields empty hits
/// and a context-free prompt. Throws FingerprintMismatch, GeneratorFailure.
RagAnswer answer(std::string_view query, const VectorIndex& index, const EmbeddingModel& model,
                 const Corpus& corpus, GeneratorClient& generator, const RagOptions& options = {});

struct EndToEndReport {
  RetrievalReport retrieval;
  GenerationReport generation;
  /// Generated answer per eval query id.
  std::map<std::string, std::string> predictions;
};

struct EndToEndOptions {
  RagOptions rag;
  std::vector<std::size_t> k_set = {1, 3};
  TextMetricOptions metrics;
  /// Upper bound on in-flight generator calls.
  std::size_t max_concurrency = 1;
};

/// One retrieval pass per query at full depth feeds both reports: the
/// ranking metrics, and the generation metrics against each query's
/// ground-truth answer. Throws EmptyEvalSet.
EndToEndReport evaluate_end2end(std::span<const EvalQuery> queries, const Corpus& corpus, const VectorIndex& index,
                                const EmbeddingModel& model, GeneratorClient& generator,
                                const EndToEndOptions& options = {});

}  // namespace ragtune
