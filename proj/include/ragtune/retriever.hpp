#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ragtune/corpus.hpp"
#include "ragtune/embedder.hpp"

namespace ragtune {

struct Hit {
  std::string doc_id;
  double score = 0.0;
  friend bool operator==(const Hit&, const Hit&) = default;
};

/// Hits ordered by descending score, ties by ascending doc_id.
struct RankedList {
  std::string query_id;
  std::vector<Hit> hits;
  /// Set when the query embedded to the zero vector; hits are then empty.
  bool degenerate = false;
  friend bool operator==(const RankedList&, const RankedList&) = default;
};

/// Sorts by (-score, doc_id) and keeps the first k.
void rank_hits(std::vector<Hit>& hits, std::size_t k);

/// Unit answer embeddings in corpus order, bound to the model that made them.
struct VectorIndex {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::vector<std::string> doc_ids;
  std::vector<float> vectors;  // doc after doc, emb_dim each
  std::uint32_t emb_dim = 0;
  std::uint64_t model_fingerprint = 0;

  std::size_t size() const noexcept { return doc_ids.size(); }
  std::span<const float> vector(std::size_t i) const { return {vectors.data() + i * emb_dim, emb_dim}; }
  /// XXH64 over the serialized form.
  std::uint64_t checksum() const;
  friend bool operator==(const VectorIndex&, const VectorIndex&) = default;
};

/// Throws EmptyCorpus, DegenerateText(doc_id).
VectorIndex build_index(const EmbeddingModel& model, const Corpus& corpus);

/// Exact cosine search over all documents; min(k, N) hits.
/// Throws FingerprintMismatch, InvalidArgument for k < 1.
RankedList search(const VectorIndex& index, const EmbeddingModel& model, std::string_view query, std::size_t k,
                  std::string query_id = {});

/// File: {magic "RTVECIDX", u32 version, u32 emb_dim, u64 doc_count,
/// u64 model_fingerprint, u64 checksum}, then doc_count length-prefixed
/// (u32) UTF-8 ids, then the vectors as little-endian float32. The checksum
/// is XXH64(seed 0) over everything except the checksum field.
void persist_index(const VectorIndex& index, const std::filesystem::path& path);
VectorIndex restore_index(const std::filesystem::path& path);

/// Okapi BM25 over embedder tokens with the nonnegative idf
/// ln((N - df + 0.5) / (df + 0.5) + 1).
class Bm25Index {
 public:
  static constexpr double kDefaultK1 = 1.5;
  static constexpr double kDefaultB = 0.75;

  Bm25Index(const Corpus& corpus, double k1 = kDefaultK1, double b = kDefaultB);

  /// Sums the term score for every query token, repeated tokens included.
  /// Documents scoring 0 are left out.
  RankedList search(std::string_view query, std::size_t k, std::string query_id = {}) const;

  double idf(const std::string& term) const;
  double avgdl() const noexcept { return avgdl_; }
  std::size_t doc_count() const noexcept { return doc_ids_.size(); }
  double k1() const noexcept { return k1_; }
  double b() const noexcept { return b_; }

 private:
  double k1_;
  double b_;
  double avgdl_ = 0.0;
  std::vector<std::string> doc_ids_;
  std::vector<double> doc_len_;
  std::map<std::string, std::size_t> df_;
  /// term -> (doc index, term frequency), doc indices ascending.
  std::map<std::string, std::vector<std::pair<std::size_t, int>>> postings_;
};

}  // namespace ragtune
