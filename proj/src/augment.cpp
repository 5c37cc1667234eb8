#include "ragtune/augment.hpp"

#include <map>
#include <unordered_set>

#include "ragtune/error.hpp"
#include "ragtune/rng.hpp"

namespace ragtune {

TripleSet mine_triples(std::span<const GeneratedQuery> queries, const Corpus& corpus, int n_neg,
                       std::uint64_t seed) {
  if (n_neg < 1) throw Error(Errc::InvalidArgument, "n_neg", "must be >= 1");
  if (corpus.size() < static_cast<std::size_t>(n_neg) + 1)
    throw Error(Errc::CorpusTooSmall, corpus.name(),
                "need at least " + std::to_string(n_neg + 1) + " entries");

  TripleSet out{{}, corpus.name(), seed};
  out.triples.reserve(queries.size());
  std::vector<std::size_t> pool;
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const auto& q = queries[qi];
    const auto pos_index = corpus.index_of(q.source_qa_id);
    if (!pos_index) throw Error(Errc::DanglingQueryReference, q.source_qa_id);
    const std::string positive_text = trim(corpus[*pos_index].answer);

    pool.clear();
    for (std::size_t i = 0; i < corpus.size(); ++i)
      if (i != *pos_index && trim(corpus[i].answer) != positive_text) pool.push_back(i);
    if (pool.size() < static_cast<std::size_t>(n_neg))
      throw Error(Errc::CorpusTooSmall, corpus.name(),
                  "only " + std::to_string(pool.size()) + " distinct negatives for " + q.source_qa_id);

    Rng rng(derive_seed(seed, qi));
    TrainingTriple t{q.text, q.source_qa_id, {}, q.query_type};
    for (std::size_t pick : rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(n_neg)))
      t.negative_answer_ids.push_back(corpus[pool[pick]].id);
    out.triples.push_back(std::move(t));
  }
  return out;
}

TriplePartition partition_triples(const TripleSet& tripleset, int holdout_per_pair, std::uint64_t seed) {
  if (holdout_per_pair < 0) throw Error(Errc::InvalidArgument, "holdout_per_pair", "must be >= 0");

  TriplePartition out;
  out.train.corpus_name = tripleset.corpus_name;
  out.train.seed = tripleset.seed;
  if (holdout_per_pair == 0) {
    out.train = tripleset;
    return out;
  }

  // Group triple indices by QA pair, keeping first-appearance order.
  std::vector<std::string> pair_order;
  std::map<std::string, std::vector<std::size_t>> by_pair;
  for (std::size_t i = 0; i < tripleset.triples.size(); ++i) {
    const auto& id = tripleset.triples[i].positive_answer_id;
    auto [it, inserted] = by_pair.try_emplace(id);
    if (inserted) pair_order.push_back(id);
    it->second.push_back(i);
  }

  std::vector<bool> held(tripleset.triples.size(), false);
  for (const auto& id : pair_order) {
    const auto& members = by_pair[id];
    if (members.size() <= static_cast<std::size_t>(holdout_per_pair))
      throw Error(Errc::InsufficientQueries, id,
                  std::to_string(members.size()) + " queries, holdout " + std::to_string(holdout_per_pair));
    Rng rng(derive_seed(seed, id));
    for (std::size_t pick : rng.sample_without_replacement(members.size(), static_cast<std::size_t>(holdout_per_pair)))
      held[members[pick]] = true;
  }

  std::map<std::string, int> ordinal;
  for (std::size_t i = 0; i < tripleset.triples.size(); ++i) {
    const auto& t = tripleset.triples[i];
    if (held[i]) {
      const int n = ordinal[t.positive_answer_id]++;
      out.eval_queries.push_back(
          {t.positive_answer_id + "#h" + std::to_string(n), t.query_text, t.positive_answer_id, t.query_type});
    } else {
      out.train.triples.push_back(t);
    }
  }
  return out;
}

std::vector<EvalQuery> original_question_queries(const Corpus& corpus) {
  std::vector<EvalQuery> out;
  out.reserve(corpus.size());
  for (const auto& qa : corpus.entries()) out.push_back({qa.id + "#orig", qa.question, qa.id, std::nullopt});
  return out;
}

void validate_triples(const TripleSet& tripleset, const Corpus& corpus) {
  for (const auto& t : tripleset.triples) {
    const auto& pos = corpus.at(t.positive_answer_id);
    if (t.negative_answer_ids.empty())
      throw Error(Errc::MalformedRecord, t.query_text, "triple without negatives");
    std::unordered_set<std::string> seen;
    for (const auto& neg : t.negative_answer_ids) {
      const auto& n = corpus.at(neg);
      if (neg == t.positive_answer_id)
        throw Error(Errc::MalformedRecord, t.query_text, "positive listed as negative");
      if (trim(n.answer) == trim(pos.answer))
        throw Error(Errc::MalformedRecord, t.query_text, "negative answer text equals positive");
      if (!seen.insert(neg).second) throw Error(Errc::MalformedRecord, t.query_text, "repeated negative");
    }
  }
}

}  // namespace ragtune
