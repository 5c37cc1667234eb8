#include "ragtune/corpus.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "ragtune/error.hpp"
#include "ragtune/rng.hpp"

namespace ragtune {

using json = nlohmann::json;

std::string trim(std::string_view text) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(ws);
  return std::string(text.substr(first, last - first + 1));
}

Corpus::Corpus(std::string name, std::vector<QAPair> entries)
    : name_(std::move(name)), entries_(std::move(entries)) {
  by_id_.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (trim(e.id).empty()) throw Error(Errc::MalformedRecord, std::to_string(i + 1), "empty id");
    if (trim(e.question).empty())
      throw Error(Errc::MalformedRecord, std::to_string(i + 1), "empty question");
    if (trim(e.answer).empty())
      throw Error(Errc::MalformedRecord, std::to_string(i + 1), "empty answer");
    if (!by_id_.emplace(e.id, i).second) throw Error(Errc::DuplicateId, e.id);
  }
}

const QAPair* Corpus::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &entries_[it->second];
}

const QAPair& Corpus::at(const std::string& id) const {
  if (const auto* p = find(id)) return *p;
  throw Error(Errc::DanglingQueryReference, id);
}

std::optional<std::size_t> Corpus::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string require_text(const json& record, const char* field, std::size_t line) {
  auto it = record.find(field);
  if (it == record.end() || !it->is_string())
    throw Error(Errc::MalformedRecord, std::to_string(line),
                std::string("missing or non-string field '") + field + "'");
  auto value = it->get<std::string>();
  if (trim(value).empty())
    throw Error(Errc::MalformedRecord, std::to_string(line),
                std::string("empty field '") + field + "'");
  return value;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::FileNotFound, path.string());

  std::vector<QAPair> entries;
  std::unordered_map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;

    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error(Errc::MalformedRecord, std::to_string(line_no), e.what());
    }
    if (!record.is_object())
      throw Error(Errc::MalformedRecord, std::to_string(line_no), "record is not an object");

    QAPair qa;
    qa.id = require_text(record, "id", line_no);
    qa.question = require_text(record, "question", line_no);
    qa.answer = require_text(record, "answer", line_no);
    if (auto it = record.find("metadata"); it != record.end() && !it->is_null()) {
      if (!it->is_object())
        throw Error(Errc::MalformedRecord, std::to_string(line_no), "metadata is not an object");
      for (const auto& [key, value] : it->items())
        qa.metadata[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
    if (!seen.emplace(qa.id, line_no).second) throw Error(Errc::DuplicateId, qa.id);
    entries.push_back(std::move(qa));
  }
  return Corpus(path.stem().string(), std::move(entries));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, path.string(), "cannot open for writing");
  for (const auto& qa : corpus.entries()) {
    json record = {{"id", qa.id}, {"question", qa.question}, {"answer", qa.answer}};
    if (!qa.metadata.empty()) record["metadata"] = qa.metadata;
    out << record.dump() << '\n';
  }
}

CorpusSplit split_corpus(const Corpus& corpus, double holdout_fraction, std::uint64_t seed) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus.name());
  if (!(holdout_fraction >= 0.0 && holdout_fraction <= 1.0))
    throw Error(Errc::InvalidArgument, "holdout_fraction", "must lie in [0, 1]");

  const std::size_t n = corpus.size();
  const auto n_test = static_cast<std::size_t>(std::llround(holdout_fraction * static_cast<double>(n)));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<bool> in_test(n, false);
  for (std::size_t i = 0; i < n_test; ++i) in_test[order[i]] = true;

  std::vector<QAPair> train, test;
  for (std::size_t i = 0; i < n; ++i) (in_test[i] ? test : train).push_back(corpus[i]);
  return {Corpus(corpus.name() + "-train", std::move(train)),
          Corpus(corpus.name() + "-test", std::move(test))};
}

}  // namespace ragtune
