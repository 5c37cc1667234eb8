#include "ragtune/embedder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "binary_io.hpp"
#include "ragtune/error.hpp"
#include "ragtune/rng.hpp"
#include "ragtune/xxhash64.hpp"

namespace ragtune {

namespace detail {

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, path, "cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, path, "write failed");
}

}  // namespace detail

namespace {

constexpr char kModelMagic[8] = {'R', 'T', 'E', 'M', 'B', 'M', 'D', 'L'};

std::string utf8(std::u32string_view s) {
  std::string out;
  for (char32_t c : s) {
    if (c < 0x80) {
      out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (c >> 12)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (c >> 18)));
      out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::uint64_t compute_fingerprint(std::uint32_t feat_dim, std::uint32_t emb_dim,
                                  std::uint64_t hash_seed, std::span<const float> columns) {
  std::vector<unsigned char> header;
  detail::append_le(header, feat_dim);
  detail::append_le(header, emb_dim);
  detail::append_le(header, hash_seed);
  Xxh64State state(0x5EED);
  state.update(header);
  // Hash in chunks so big-endian hosts see the same byte stream.
  std::vector<unsigned char> chunk;
  constexpr std::size_t kChunk = 1 << 16;
  for (std::size_t off = 0; off < columns.size(); off += kChunk) {
    chunk.clear();
    detail::append_floats_le(chunk, columns.subspan(off, std::min(kChunk, columns.size() - off)));
    state.update(chunk);
  }
  return state.digest();
}

/// Blocked transpose of a rows x cols row-major matrix into cols x rows.
void transpose(std::span<const float> in, std::span<float> out, std::size_t rows, std::size_t cols) {
  constexpr std::size_t kBlock = 64;
  for (std::size_t r0 = 0; r0 < rows; r0 += kBlock) {
    const std::size_t r1 = std::min(rows, r0 + kBlock);
    for (std::size_t c0 = 0; c0 < cols; c0 += kBlock) {
      const std::size_t c1 = std::min(cols, c0 + kBlock);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) out[c * rows + r] = in[r * cols + c];
    }
  }
}

}  // namespace

EmbeddingModel::EmbeddingModel(std::uint32_t feat_dim, std::uint32_t emb_dim,
                               std::uint64_t hash_seed, std::vector<float> columns)
    : feat_dim_(feat_dim), emb_dim_(emb_dim), hash_seed_(hash_seed), columns_(std::move(columns)) {
  if (feat_dim_ == 0 || emb_dim_ == 0) throw Error(Errc::InvalidDims, "", "dimensions must be >= 1");
  if (columns_.size() != static_cast<std::size_t>(feat_dim_) * emb_dim_)
    throw Error(Errc::InvalidDims, "", "parameter count does not match dimensions");
  seal();
}

std::span<float> EmbeddingModel::mutable_column(std::uint32_t feature) {
  sealed_ = false;
  return {columns_.data() + static_cast<std::size_t>(feature) * emb_dim_, emb_dim_};
}

std::span<float> EmbeddingModel::mutable_columns() {
  sealed_ = false;
  return columns_;
}

void EmbeddingModel::seal() {
  fingerprint_ = compute_fingerprint(feat_dim_, emb_dim_, hash_seed_, columns_);
  sealed_ = true;
}

std::uint64_t EmbeddingModel::fingerprint() const {
  if (!sealed_) {
    fingerprint_ = compute_fingerprint(feat_dim_, emb_dim_, hash_seed_, columns_);
    sealed_ = true;
  }
  return fingerprint_;
}

std::vector<std::pair<std::string, int>> feature_keys(const TokenSeq& tokens,
                                                      std::string_view raw_text) {
  std::map<std::string, int> counts;
  for (const auto& t : tokens) ++counts["u:" + t];
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) ++counts["b:" + tokens[i] + " " + tokens[i + 1]];
  const std::u32string grams = normalize_for_grams(raw_text);
  for (std::size_t i = 0; i + 3 <= grams.size(); ++i)
    ++counts["c:" + utf8(std::u32string_view(grams).substr(i, 3))];
  return {counts.begin(), counts.end()};
}

FeatureVector featurize(const TokenSeq& tokens, std::string_view raw_text,
                        const EmbeddingModel& model) {
  std::map<std::uint32_t, double> accum;
  for (const auto& [key, count] : feature_keys(tokens, raw_text)) {
    const auto index = static_cast<std::uint32_t>(xxh64(key, model.hash_seed()) % model.feat_dim());
    accum[index] += 1.0 + std::log(static_cast<double>(count));
  }
  double norm2 = 0.0;
  for (const auto& [_, w] : accum) norm2 += w * w;

  FeatureVector fv;
  if (norm2 == 0.0) return fv;
  const double inv = 1.0 / std::sqrt(norm2);
  fv.indices.reserve(accum.size());
  fv.weights.reserve(accum.size());
  for (const auto& [index, w] : accum) {
    fv.indices.push_back(index);
    fv.weights.push_back(w * inv);
  }
  return fv;
}

FeatureVector featurize(std::string_view text, const EmbeddingModel& model) {
  return featurize(tokenize(text), text, model);
}

std::vector<double> project(const EmbeddingModel& model, const FeatureVector& features) {
  std::vector<double> v(model.emb_dim(), 0.0);
  for (std::size_t k = 0; k < features.size(); ++k) {
    const auto col = model.column(features.indices[k]);
    const double w = features.weights[k];
    for (std::size_t r = 0; r < v.size(); ++r) v[r] += w * static_cast<double>(col[r]);
  }
  return v;
}

Embedding embed_features(const EmbeddingModel& model, const FeatureVector& features) {
  Embedding e;
  e.values = project(model, features);
  double norm2 = 0.0;
  for (double x : e.values) norm2 += x * x;
  if (norm2 == 0.0) {
    e.degenerate = true;
    return e;
  }
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& x : e.values) x *= inv;
  return e;
}

Embedding embed(const EmbeddingModel& model, std::string_view text) {
  return embed_features(model, featurize(text, model));
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(Errc::DimensionMismatch, std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(nu) * std::sqrt(nv)), -1.0, 1.0);
}

double init_bound(std::uint32_t feat_dim, std::uint32_t emb_dim) {
  return std::sqrt(6.0 / (static_cast<double>(feat_dim) + static_cast<double>(emb_dim)));
}

EmbeddingModel init_model(std::uint32_t feat_dim, std::uint32_t emb_dim, std::uint64_t seed) {
  return init_model(feat_dim, emb_dim, seed, seed);
}

EmbeddingModel init_model(std::uint32_t feat_dim, std::uint32_t emb_dim, std::uint64_t seed,
                          std::uint64_t hash_seed) {
  if (feat_dim == 0 || emb_dim == 0) throw Error(Errc::InvalidDims, "", "dimensions must be >= 1");
  const double a = init_bound(feat_dim, emb_dim);
  const float fa = static_cast<float>(a);
  // Float rounding may step just outside [-a, a]; pull such values back in.
  const float limit = static_cast<double>(fa) > a ? std::nextafter(fa, 0.0f) : fa;

  std::vector<float> columns(static_cast<std::size_t>(feat_dim) * emb_dim);
  Rng rng(seed);
  for (float& x : columns) x = std::clamp(static_cast<float>(rng.uniform(-a, a)), -limit, limit);
  return EmbeddingModel(feat_dim, emb_dim, hash_seed, std::move(columns));
}

void persist_model(const EmbeddingModel& model, const std::filesystem::path& path) {
  const std::size_t count = static_cast<std::size_t>(model.feat_dim()) * model.emb_dim();
  std::vector<float> row_major(count);
  transpose(model.columns(), row_major, model.feat_dim(), model.emb_dim());

  std::vector<unsigned char> bytes(std::begin(kModelMagic), std::end(kModelMagic));
  bytes.reserve(40 + count * 4);
  detail::append_le(bytes, EmbeddingModel::kFormatVersion);
  detail::append_le(bytes, model.feat_dim());
  detail::append_le(bytes, model.emb_dim());
  detail::append_le(bytes, std::uint32_t{0});
  detail::append_le(bytes, model.hash_seed());
  const std::size_t checksum_at = bytes.size();
  detail::append_le(bytes, std::uint64_t{0});
  detail::append_floats_le(bytes, row_major);

  Xxh64State state(0);
  state.update(std::span<const unsigned char>(bytes.data(), checksum_at));
  state.update(std::span<const unsigned char>(bytes.data() + checksum_at + 8, bytes.size() - checksum_at - 8));
  const std::uint64_t checksum = state.digest();
  for (int i = 0; i < 8; ++i) bytes[checksum_at + i] = static_cast<unsigned char>(checksum >> (8 * i));

  detail::write_file(path.string(), bytes);
}

EmbeddingModel restore_model(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path.string());
  detail::Reader reader(bytes, path.string());
  if (reader.read_bytes(8) != std::string(kModelMagic, 8))
    throw Error(Errc::CorruptFile, path.string(), "bad magic");
  const auto version = reader.read<std::uint32_t>();
  if (version != EmbeddingModel::kFormatVersion)
    throw Error(Errc::UnsupportedVersion, std::to_string(version));
  const auto feat_dim = reader.read<std::uint32_t>();
  const auto emb_dim = reader.read<std::uint32_t>();
  reader.read<std::uint32_t>();
  const auto hash_seed = reader.read<std::uint64_t>();
  const std::size_t checksum_at = reader.position();
  const auto checksum = reader.read<std::uint64_t>();
  if (feat_dim == 0 || emb_dim == 0) throw Error(Errc::CorruptFile, path.string(), "zero dimension");

  const std::size_t count = static_cast<std::size_t>(feat_dim) * emb_dim;
  if (reader.remaining() != count * 4) throw Error(Errc::CorruptFile, path.string(), "size mismatch");

  Xxh64State state(0);
  state.update(std::span<const unsigned char>(bytes.data(), checksum_at));
  state.update(std::span<const unsigned char>(bytes.data() + checksum_at + 8, bytes.size() - checksum_at - 8));
  if (state.digest() != checksum) throw Error(Errc::CorruptFile, path.string(), "checksum mismatch");

  std::vector<float> row_major(count);
  reader.read_floats(row_major);
  for (float x : row_major)
    if (!std::isfinite(x)) throw Error(Errc::CorruptFile, path.string(), "non-finite parameter");

  std::vector<float> columns(count);
  transpose(row_major, columns, emb_dim, feat_dim);
  return EmbeddingModel(feat_dim, emb_dim, hash_seed, std::move(columns));
}

}  // namespace ragtune
