#include "ragtune/retriever.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "ragtune/error.hpp"
#include "ragtune/xxhash64.hpp"

namespace ragtune {

namespace {

constexpr char kIndexMagic[8] = {'R', 'T', 'V', 'E', 'C', 'I', 'D', 'X'};
constexpr std::size_t kChecksumOffset = 32;

std::vector<unsigned char> serialize(const VectorIndex& index) {
  std::vector<unsigned char> out(kIndexMagic, kIndexMagic + 8);
  detail::append_le(out, VectorIndex::kFormatVersion);
  detail::append_le(out, index.emb_dim);
  detail::append_le(out, static_cast<std::uint64_t>(index.doc_ids.size()));
  detail::append_le(out, index.model_fingerprint);
  detail::append_le(out, std::uint64_t{0});
  for (const auto& id : index.doc_ids) {
    detail::append_le(out, static_cast<std::uint32_t>(id.size()));
    out.insert(out.end(), id.begin(), id.end());
  }
  detail::append_floats_le(out, index.vectors);

  Xxh64State state(0);
  state.update(std::span<const unsigned char>(out.data(), kChecksumOffset));
  state.update(std::span<const unsigned char>(out.data() + kChecksumOffset + 8, out.size() - kChecksumOffset - 8));
  const auto digest = state.digest();
  for (int i = 0; i < 8; ++i) out[kChecksumOffset + i] = static_cast<unsigned char>(digest >> (8 * i));
  return out;
}

}  // namespace

void rank_hits(std::vector<Hit>& hits, std::size_t k) {
  auto before = [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  };
  if (k < hits.size()) {
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), before);
    hits.resize(k);
  } else {
    std::sort(hits.begin(), hits.end(), before);
  }
}

std::uint64_t VectorIndex::checksum() const {
  const auto bytes = serialize(*this);
  return xxh64(std::span<const unsigned char>(bytes), 0);
}

VectorIndex build_index(const EmbeddingModel& model, const Corpus& corpus) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus.name());
  VectorIndex index;
  index.emb_dim = model.emb_dim();
  index.model_fingerprint = model.fingerprint();
  index.doc_ids.reserve(corpus.size());
  index.vectors.reserve(corpus.size() * model.emb_dim());
  for (const auto& qa : corpus.entries()) {
    const auto e = embed(model, qa.answer);
    if (e.degenerate) throw Error(Errc::DegenerateText, qa.id, "answer embeds to the zero vector");
    index.doc_ids.push_back(qa.id);
    for (double x : e.values) index.vectors.push_back(static_cast<float>(x));
  }
  return index;
}

RankedList search(const VectorIndex& index, const EmbeddingModel& model, std::string_view query, std::size_t k,
                  std::string query_id) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k", "must be >= 1");
  if (model.fingerprint() != index.model_fingerprint || model.emb_dim() != index.emb_dim)
    throw Error(Errc::FingerprintMismatch, std::to_string(model.fingerprint()),
                "index was built with model " + std::to_string(index.model_fingerprint));
  RankedList out;
  out.query_id = std::move(query_id);
  const auto q = embed(model, query);
  if (q.degenerate) {
    out.degenerate = true;
    return out;
  }
  out.hits.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto v = index.vector(i);
    double s = 0.0;
    for (std::size_t r = 0; r < index.emb_dim; ++r) s += q.values[r] * static_cast<double>(v[r]);
    out.hits.push_back({index.doc_ids[i], s});
  }
  rank_hits(out.hits, k);
  return out;
}

void persist_index(const VectorIndex& index, const std::filesystem::path& path) {
  detail::write_file(path.string(), serialize(index));
}

VectorIndex restore_index(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path.string());
  const std::string where = path.string();
  detail::Reader reader(bytes, where);
  if (reader.read_bytes(8) != std::string(kIndexMagic, 8)) throw Error(Errc::CorruptFile, where, "bad magic");
  const auto version = reader.read<std::uint32_t>();
  if (version != VectorIndex::kFormatVersion) throw Error(Errc::UnsupportedVersion, std::to_string(version));
  VectorIndex index;
  index.emb_dim = reader.read<std::uint32_t>();
  const auto count = reader.read<std::uint64_t>();
  index.model_fingerprint = reader.read<std::uint64_t>();
  const auto checksum = reader.read<std::uint64_t>();

  Xxh64State state(0);
  state.update(std::span<const unsigned char>(bytes.data(), kChecksumOffset));
  state.update(std::span<const unsigned char>(bytes.data() + kChecksumOffset + 8, bytes.size() - kChecksumOffset - 8));
  if (state.digest() != checksum) throw Error(Errc::CorruptFile, where, "checksum mismatch");

  if (count > reader.remaining() / 4) throw Error(Errc::CorruptFile, where, "doc count too large");
  index.doc_ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = reader.read<std::uint32_t>();
    index.doc_ids.push_back(reader.read_bytes(len));
  }
  if (reader.remaining() != count * index.emb_dim * 4) throw Error(Errc::CorruptFile, where, "size mismatch");
  index.vectors.resize(count * index.emb_dim);
  reader.read_floats(index.vectors);
  return index;
}

}  // namespace ragtune
