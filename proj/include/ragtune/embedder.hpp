#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ragtune {

using TokenSeq = std::vector<std::string>;

/// NFC-normalizes and lowercases `text`, then splits it into tokens:
/// every Han codepoint is its own token, maximal runs of other letters and
/// digits form one token, and everything else separates tokens.
TokenSeq tokenize(std::string_view text);

/// The text the character n-grams are read from: NFC, lowercased, separator
/// runs collapsed to one space, padded with two spaces on each side so that
/// word-boundary grams exist. Empty when the text has no tokens.
std::u32string normalize_for_grams(std::string_view text);

/// Sparse, index-sorted feature vector.
struct FeatureVector {
  std::vector<std::uint32_t> indices;
  std::vector<double> weights;

  bool empty() const noexcept { return indices.empty(); }
  std::size_t size() const noexcept { return indices.size(); }
  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Trainable text encoder: hashed sparse features followed by a linear
/// projection. The projection is emb_dim x feat_dim; in memory it is kept
/// feature-major (one contiguous emb_dim column per feature) because every
/// forward and backward pass touches whole columns.
class EmbeddingModel {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint32_t kDefaultFeatDim = 1u << 18;
  static constexpr std::uint32_t kDefaultEmbDim = 256;

  EmbeddingModel() = default;
  /// `columns` is feature-major, size feat_dim * emb_dim.
  EmbeddingModel(std::uint32_t feat_dim, std::uint32_t emb_dim, std::uint64_t hash_seed,
                 std::vector<float> columns);

  std::uint32_t feat_dim() const noexcept { return feat_dim_; }
  std::uint32_t emb_dim() const noexcept { return emb_dim_; }
  std::uint64_t hash_seed() const noexcept { return hash_seed_; }
  std::uint32_t version() const noexcept { return kFormatVersion; }

  std::span<const float> column(std::uint32_t feature) const {
    return {columns_.data() + static_cast<std::size_t>(feature) * emb_dim_, emb_dim_};
  }
  /// Entry (row, feature) of the emb_dim x feat_dim projection.
  float at(std::uint32_t row, std::uint32_t feature) const {
    return columns_[static_cast<std::size_t>(feature) * emb_dim_ + row];
  }
  std::span<const float> columns() const noexcept { return columns_; }

  /// Mutable access invalidates the cached fingerprint until seal().
  std::span<float> mutable_column(std::uint32_t feature);
  std::span<float> mutable_columns();

  /// Recomputes the fingerprint after in-place edits.
  void seal();
  /// Checksum over dims, hash seed and parameters. Computed lazily if the
  /// model was edited and not sealed; call seal() before sharing across threads.
  std::uint64_t fingerprint() const;

  friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
    return a.feat_dim_ == b.feat_dim_ && a.emb_dim_ == b.emb_dim_ &&
           a.hash_seed_ == b.hash_seed_ && a.columns_ == b.columns_;
  }

 private:
  std::uint32_t feat_dim_ = 0;
  std::uint32_t emb_dim_ = 0;
  std::uint64_t hash_seed_ = 0;
  std::vector<float> columns_;
  mutable std::uint64_t fingerprint_ = 0;
  mutable bool sealed_ = false;
};

/// Token unigrams ("u:"), token bigrams ("b:") and character 3-grams ("c:")
/// of the normalized text, hashed with XXH64(hash_seed) mod feat_dim.
/// Weights are 1 + ln(count) per key, summed on index collisions, then the
/// vector is L2-normalized.
FeatureVector featurize(const TokenSeq& tokens, std::string_view raw_text,
                        const EmbeddingModel& model);
FeatureVector featurize(std::string_view text, const EmbeddingModel& model);

/// Feature keys before hashing, sorted, with their counts. Exposed for
/// inspection and tests.
std::vector<std::pair<std::string, int>> feature_keys(const TokenSeq& tokens,
                                                      std::string_view raw_text);

struct Embedding {
  std::vector<double> values;
  /// True when the projected vector had zero norm (e.g. empty text); values are then all zero.
  bool degenerate = false;
};

Embedding embed(const EmbeddingModel& model, std::string_view text);
Embedding embed_features(const EmbeddingModel& model, const FeatureVector& features);

/// Raw (unnormalized) projection of a feature vector.
std::vector<double> project(const EmbeddingModel& model, const FeatureVector& features);

/// dot(u, v) / (|u| |v|); 0 when either norm is 0. Throws DimensionMismatch.
double cosine(std::span<const double> u, std::span<const double> v);

/// Projection entries iid uniform on [-a, a], a = sqrt(6 / (feat_dim + emb_dim)),
/// drawn from MT19937-64(seed) in storage order.
EmbeddingModel init_model(std::uint32_t feat_dim, std::uint32_t emb_dim, std::uint64_t seed);
EmbeddingModel init_model(std::uint32_t feat_dim, std::uint32_t emb_dim, std::uint64_t seed,
                          std::uint64_t hash_seed);

double init_bound(std::uint32_t feat_dim, std::uint32_t emb_dim);

/// Model file: 40-byte header {magic "RTEMBMDL", u32 version, u32 feat_dim,
/// u32 emb_dim, u32 reserved, u64 hash_seed, u64 checksum} followed by the
/// projection as little-endian float32 in row-major order. The checksum is
/// XXH64(seed 0) over the header without the checksum field plus the payload.
void persist_model(const EmbeddingModel& model, const std::filesystem::path& path);
EmbeddingModel restore_model(const std::filesystem::path& path);

}  // namespace ragtune
