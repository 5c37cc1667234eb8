#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ragtune {

/// One question/answer record. Metadata values that are not strings in the
/// source file are kept as their JSON text.
struct QAPair {
  std::string id;
  std::string question;
  std::string answer;
  std::map<std::string, std::string> metadata;

  friend bool operator==(const QAPair&, const QAPair&) = default;
};

/// Ordered, id-unique collection of QA pairs. Immutable once built.
class Corpus {
 public:
  Corpus() = default;
  /// Validates ids and text fields; throws DuplicateId / MalformedRecord.
  Corpus(std::string name, std::vector<QAPair> entries);

  const std::string& name() const noexcept { return name_; }
  const std::vector<QAPair>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const QAPair& operator[](std::size_t i) const { return entries_[i]; }

  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }
  /// nullptr when absent.
  const QAPair* find(const std::string& id) const;
  /// Throws DanglingQueryReference when absent.
  const QAPair& at(const std::string& id) const;
  std::optional<std::size_t> index_of(const std::string& id) const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.name_ == b.name_ && a.entries_ == b.entries_;
  }

 private:
  std::string name_;
  std::vector<QAPair> entries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

enum class CorpusFormat { Jsonl };

/// One JSON object per line: {"id","question","answer","metadata"?}.
/// Blank lines are skipped; line numbers in errors are 1-based.
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::Jsonl);

void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

struct CorpusSplit {
  Corpus train;
  Corpus test;
};

/// Seeded partition by QA pair. |test| = round(holdout_fraction * |corpus|);
/// both halves keep the corpus order.
CorpusSplit split_corpus(const Corpus& corpus, double holdout_fraction, std::uint64_t seed);

/// Trims ASCII and Unicode-agnostic whitespace bytes (space, \t, \n, \r, \f, \v).
std::string trim(std::string_view text);

}  // namespace ragtune
