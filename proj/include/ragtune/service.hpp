#pragma once

#include <memory>
#include <string>

#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"
#include "ragtune/ragpipe.hpp"
#include "ragtune/retriever.hpp"

namespace ragtune {

/// Artifacts shared read-only by every request.
struct ServiceState {
  Corpus corpus;
  EmbeddingModel model;
  VectorIndex index;
  std::unique_ptr<GeneratorClient> generator;
  RagOptions rag;
  /// Upper bound accepted for the per-request "k".
  std::size_t max_k = 100;
};

/// POST /v1/query {"query": text, "k"?: integer}
///   200 {"answer", "contexts": [{"doc_id","score","text"}], "latency_ms"}
///   400 malformed body, 422 degenerate query,
///   502 generator failure (contexts still included)
/// GET /v1/health
///   200 {"status","version","model_fingerprint","index_model_fingerprint",
///        "index_checksum","documents"}
/// Throws FingerprintMismatch at construction when model and index disagree.
class RagService {
 public:
  explicit RagService(ServiceState state);
  ~RagService();
  RagService(const RagService&) = delete;
  RagService& operator=(const RagService&) = delete;

  /// Binds to an ephemeral port and returns it; -1 on failure.
  int bind_any_port(const std::string& host);
  bool bind(const std::string& host, int port);
  /// Blocks until stop().
  bool listen_after_bind();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ragtune
