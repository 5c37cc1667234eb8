#include <cmath>

#include "ragtune/error.hpp"
#include "ragtune/retriever.hpp"

namespace ragtune {

Bm25Index::Bm25Index(const Corpus& corpus, double k1, double b) : k1_(k1), b_(b) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus.name());
  if (!(k1 >= 0.0)) throw Error(Errc::InvalidArgument, "k1", "must be >= 0");
  if (!(b >= 0.0 && b <= 1.0)) throw Error(Errc::InvalidArgument, "b", "must be in [0, 1]");
  double total = 0.0;
  for (std::size_t d = 0; d < corpus.size(); ++d) {
    const auto tokens = tokenize(corpus[d].answer);
    doc_ids_.push_back(corpus[d].id);
    doc_len_.push_back(static_cast<double>(tokens.size()));
    total += static_cast<double>(tokens.size());
    std::map<std::string, int> tf;
    for (const auto& t : tokens) ++tf[t];
    for (const auto& [term, count] : tf) {
      ++df_[term];
      postings_[term].emplace_back(d, count);
    }
  }
  avgdl_ = total / static_cast<double>(corpus.size());
}

double Bm25Index::idf(const std::string& term) const {
  const auto it = df_.find(term);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  const double n = static_cast<double>(doc_ids_.size());
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

RankedList Bm25Index::search(std::string_view query, std::size_t k, std::string query_id) const {
  if (k < 1) throw Error(Errc::InvalidArgument, "k", "must be >= 1");
  RankedList out;
  out.query_id = std::move(query_id);
  std::vector<double> scores(doc_ids_.size(), 0.0);
  for (const auto& term : tokenize(query)) {
    const auto it = postings_.find(term);
    if (it == postings_.end()) continue;
    const double w = idf(term);
    for (const auto& [d, tf] : it->second) {
      const double norm = avgdl_ > 0.0 ? doc_len_[d] / avgdl_ : 0.0;
      scores[d] += w * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * norm));
    }
  }
  for (std::size_t d = 0; d < scores.size(); ++d)
    if (scores[d] > 0.0) out.hits.push_back({doc_ids_[d], scores[d]});
  rank_hits(out.hits, k);
  return out;
}

}  // namespace ragtune
