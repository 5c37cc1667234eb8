#include "ragtune/metrics.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include "json.hpp"
#include "ragtune/error.hpp"

namespace ragtune {

using json = nlohmann::json;

double RelevanceJudgments::grade(const std::string& query_id, const std::string& doc_id) const {
  if (graded()) {
    const auto q = grades.find(query_id);
    if (q == grades.end()) throw Error(Errc::MissingJudgment, query_id);
    const auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0.0 : d->second;
  }
  const auto q = relevant.find(query_id);
  if (q == relevant.end()) throw Error(Errc::MissingJudgment, query_id);
  return q->second == doc_id ? 1.0 : 0.0;
}

bool RelevanceJudgments::has(const std::string& query_id) const {
  return graded() ? grades.count(query_id) != 0 : relevant.count(query_id) != 0;
}

RelevanceJudgments RelevanceJudgments::from_eval_queries(std::span<const EvalQuery> queries) {
  RelevanceJudgments j;
  for (const auto& q : queries) j.relevant[q.query_id] = q.positive_answer_id;
  return j;
}

namespace {

void require_k(std::size_t k) {
  if (k < 1) throw Error(Errc::InvalidArgument, "k", "must be >= 1");
}

void require_nonempty(std::span<const RankedList> ranked) {
  if (ranked.empty()) throw Error(Errc::EmptyEvalSet, "ranked", "no ranked lists");
}

void require_judged(const RankedList& list, const RelevanceJudgments& judgments) {
  if (!judgments.has(list.query_id)) throw Error(Errc::MissingJudgment, list.query_id);
}

/// 1-based rank of the first relevant hit within the first `depth` hits, or 0.
std::size_t first_relevant(const RankedList& list, const RelevanceJudgments& judgments, std::size_t depth) {
  require_judged(list, judgments);
  const std::size_t n = std::min(depth, list.hits.size());
  for (std::size_t i = 0; i < n; ++i)
    if (judgments.grade(list.query_id, list.hits[i].doc_id) > 0.0) return i + 1;
  return 0;
}

double gain(double grade) { return std::exp2(grade) - 1.0; }

}  // namespace

double hit_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k) {
  require_k(k);
  require_nonempty(ranked);
  double hits = 0.0;
  for (const auto& list : ranked)
    if (first_relevant(list, judgments, k) != 0) hits += 1.0;
  return hits / static_cast<double>(ranked.size());
}

double mrr(std::span<const RankedList> ranked, const RelevanceJudgments& judgments) {
  require_nonempty(ranked);
  double sum = 0.0;
  for (const auto& list : ranked) {
    const auto rank = first_relevant(list, judgments, list.hits.size());
    if (rank != 0) sum += 1.0 / static_cast<double>(rank);
  }
  return sum / static_cast<double>(ranked.size());
}

double precision_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k) {
  require_k(k);
  require_nonempty(ranked);
  double sum = 0.0;
  for (const auto& list : ranked) {
    require_judged(list, judgments);
    std::size_t relevant = 0;
    for (std::size_t i = 0; i < std::min(k, list.hits.size()); ++i)
      if (judgments.grade(list.query_id, list.hits[i].doc_id) > 0.0) ++relevant;
    sum += static_cast<double>(relevant) / static_cast<double>(k);
  }
  return sum / static_cast<double>(ranked.size());
}

double ndcg_at_k(std::span<const RankedList> ranked, const RelevanceJudgments& judgments, std::size_t k) {
  require_k(k);
  require_nonempty(ranked);
  double sum = 0.0;
  for (const auto& list : ranked) {
    require_judged(list, judgments);
    std::vector<double> ideal;
    if (judgments.graded()) {
      for (const auto& [doc, g] : judgments.grades.at(list.query_id))
        if (g < 0.0) throw Error(Errc::InvalidArgument, list.query_id, "negative grade for " + doc);
        else ideal.push_back(g);
      std::sort(ideal.begin(), ideal.end(), std::greater<>());
    } else {
      ideal.push_back(1.0);
    }
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i)
      idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    if (!(idcg > 0.0)) throw Error(Errc::ZeroIdealGain, list.query_id);
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, list.hits.size()); ++i)
      dcg += gain(judgments.grade(list.query_id, list.hits[i].doc_id)) / std::log2(static_cast<double>(i) + 2.0);
    sum += dcg / idcg;
  }
  return sum / static_cast<double>(ranked.size());
}

TextPair make_text_pair(std::string_view candidate, std::string_view reference) {
  return {tokenize(candidate), tokenize(reference)};
}

std::string_view to_string(Rouge1Mode mode) noexcept { return mode == Rouge1Mode::Recall ? "recall" : "f1"; }

Rouge1Mode parse_rouge1_mode(std::string_view name) {
  if (name == "recall") return Rouge1Mode::Recall;
  if (name == "f1") return Rouge1Mode::F1;
  throw Error(Errc::InvalidArgument, std::string(name), "unknown ROUGE-1 mode");
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const TokenSeq& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i)
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  return counts;
}

std::size_t clipped_matches(const NgramCounts& candidate, const NgramCounts& reference) {
  std::size_t m = 0;
  for (const auto& [gram, count] : candidate) {
    const auto it = reference.find(gram);
    if (it != reference.end()) m += std::min(count, it->second);
  }
  return m;
}

}  // namespace

double rouge1(const TextPair& pair, Rouge1Mode mode) {
  if (pair.reference.empty()) throw Error(Errc::EmptyReference, "rouge1");
  const auto m = static_cast<double>(clipped_matches(count_ngrams(pair.candidate, 1), count_ngrams(pair.reference, 1)));
  const double recall = m / static_cast<double>(pair.reference.size());
  if (mode == Rouge1Mode::Recall) return recall;
  if (m == 0.0) return 0.0;
  const double precision = m / static_cast<double>(pair.candidate.size());
  return 2.0 * precision * recall / (precision + recall);
}

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const TextPair& pair, double beta) {
  if (pair.candidate.empty() || pair.reference.empty()) throw Error(Errc::EmptyText, "rouge_l");
  const auto lcs = static_cast<double>(lcs_length(pair.candidate, pair.reference));
  if (lcs == 0.0) return 0.0;
  const double r = lcs / static_cast<double>(pair.reference.size());
  const double p = lcs / static_cast<double>(pair.candidate.size());
  const double b2 = beta * beta;
  return (1.0 + b2) * r * p / (b2 * r + p);
}

NgramProfile ngram_profile(const TextPair& pair, int max_n) {
  if (max_n < 1) throw Error(Errc::InvalidArgument, "max_n", "must be >= 1");
  NgramProfile p;
  p.candidate_length = pair.candidate.size();
  p.reference_length = pair.reference.size();
  for (int n = 1; n <= max_n; ++n) {
    const auto cand = count_ngrams(pair.candidate, static_cast<std::size_t>(n));
    const std::size_t total = pair.candidate.size() >= static_cast<std::size_t>(n)
                                  ? pair.candidate.size() - static_cast<std::size_t>(n) + 1
                                  : 0;
    const std::size_t m = clipped_matches(cand, count_ngrams(pair.reference, static_cast<std::size_t>(n)));
    p.matches.push_back(m);
    p.totals.push_back(total);
    p.precisions.push_back(total == 0 ? 0.0 : static_cast<double>(m) / static_cast<double>(total));
  }
  const double c = static_cast<double>(p.candidate_length);
  const double r = static_cast<double>(p.reference_length);
  p.brevity_penalty = c == 0.0 ? 0.0 : (c > r ? 1.0 : std::exp(1.0 - r / c));
  return p;
}

BleuScores bleu(const TextPair& pair, const BleuOptions& options) {
  if (pair.reference.empty()) throw Error(Errc::EmptyReference, "bleu");
  BleuScores out;
  out.profile = ngram_profile(pair, options.max_n);
  const auto& p = out.profile;
  for (int k = 1; k <= options.max_n; ++k) {
    if (p.candidate_length == 0) {
      out.scores.push_back(0.0);
      continue;
    }
    const std::size_t n_eff =
        options.strict ? static_cast<std::size_t>(k)
                       : std::min({static_cast<std::size_t>(k), p.candidate_length, p.reference_length});
    double log_sum = 0.0;
    bool zero = false;
    for (std::size_t n = 0; n < n_eff; ++n) {
      if (p.precisions[n] == 0.0) {
        zero = true;
        break;
      }
      log_sum += std::log(p.precisions[n]);
    }
    out.scores.push_back(zero ? 0.0 : p.brevity_penalty * std::exp(log_sum / static_cast<double>(n_eff)));
  }
  return out;
}

namespace {

class TokenEmbeddings {
 public:
  explicit TokenEmbeddings(const EmbeddingModel& model) : model_(model) {}

  const Embedding& get(const std::string& token) {
    auto [it, inserted] = cache_.try_emplace(token);
    if (inserted) it->second = embed(model_, token);
    return it->second;
  }

 private:
  const EmbeddingModel& model_;
  std::unordered_map<std::string, Embedding> cache_;
};

double greedy_match(const TokenSeq& from, const TokenSeq& to, TokenEmbeddings& emb) {
  double sum = 0.0;
  for (const auto& a : from) {
    const auto& ea = emb.get(a);
    double best = 0.0;
    for (const auto& b : to) best = std::max(best, cosine(ea.values, emb.get(b).values));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

BertScore bert_prf_cached(const TextPair& pair, TokenEmbeddings& emb) {
  if (pair.candidate.empty() || pair.reference.empty()) throw Error(Errc::EmptyText, "bert_prf");
  BertScore s;
  s.precision = greedy_match(pair.candidate, pair.reference, emb);
  s.recall = greedy_match(pair.reference, pair.candidate, emb);
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace

BertScore bert_prf(const TextPair& pair, const EmbeddingModel& model) {
  TokenEmbeddings emb(model);
  return bert_prf_cached(pair, emb);
}

RetrievalReport retrieval_report(std::span<const RankedList> ranked, const RelevanceJudgments& judgments,
                                 std::span<const std::size_t> k_set) {
  if (k_set.empty()) throw Error(Errc::InvalidArgument, "k_set", "empty");
  RetrievalReport r;
  r.k_set.assign(k_set.begin(), k_set.end());
  std::sort(r.k_set.begin(), r.k_set.end());
  r.k_set.erase(std::unique(r.k_set.begin(), r.k_set.end()), r.k_set.end());
  r.query_count = ranked.size();
  r.mrr = mrr(ranked, judgments);
  for (auto k : r.k_set) {
    r.hit[k] = hit_at_k(ranked, judgments, k);
    r.precision[k] = precision_at_k(ranked, judgments, k);
    r.ndcg[k] = ndcg_at_k(ranked, judgments, k);
  }
  return r;
}

RetrievalReport evaluate_retrieval(const Searcher& searcher, std::span<const EvalQuery> queries,
                                   std::span<const std::size_t> k_set, std::size_t depth) {
  if (queries.empty()) throw Error(Errc::EmptyEvalSet, "eval_queries");
  if (k_set.empty()) throw Error(Errc::InvalidArgument, "k_set", "empty");
  for (auto k : k_set) require_k(k);
  depth = std::max(depth, *std::max_element(k_set.begin(), k_set.end()));
  std::vector<RankedList> ranked;
  ranked.reserve(queries.size());
  for (const auto& q : queries) {
    auto list = searcher(q, depth);
    list.query_id = q.query_id;
    ranked.push_back(std::move(list));
  }
  return retrieval_report(ranked, RelevanceJudgments::from_eval_queries(queries), k_set);
}

RetrievalReport evaluate_retrieval(const VectorIndex& index, const EmbeddingModel& model,
                                   std::span<const EvalQuery> queries, std::span<const std::size_t> k_set) {
  return evaluate_retrieval(
      [&](const EvalQuery& q, std::size_t depth) { return search(index, model, q.query_text, depth, q.query_id); },
      queries, k_set);
}

RetrievalReport evaluate_retrieval(const Bm25Index& index, std::span<const EvalQuery> queries,
                                   std::span<const std::size_t> k_set) {
  return evaluate_retrieval(
      [&](const EvalQuery& q, std::size_t depth) { return index.search(q.query_text, depth, q.query_id); }, queries,
      k_set);
}

GenerationReport evaluate_generation(const std::map<std::string, std::string>& predictions,
                                     const std::map<std::string, std::string>& references,
                                     const EmbeddingModel& model, const TextMetricOptions& options) {
  for (const auto& [id, _] : predictions)
    if (!references.count(id)) throw Error(Errc::IdSetMismatch, id, "prediction without reference");
  for (const auto& [id, _] : references)
    if (!predictions.count(id)) throw Error(Errc::IdSetMismatch, id, "reference without prediction");
  if (references.empty()) throw Error(Errc::EmptyEvalSet, "references");

  GenerationReport r;
  r.item_count = references.size();
  r.bleu.assign(static_cast<std::size_t>(options.bleu.max_n), 0.0);
  TokenEmbeddings emb(model);
  for (const auto& [id, reference] : references) {
    const auto pair = make_text_pair(predictions.at(id), reference);
    if (pair.reference.empty()) throw Error(Errc::EmptyReference, id);
    if (pair.candidate.empty()) continue;
    r.rouge1 += rouge1(pair, options.rouge1_mode);
    r.rouge_l += rouge_l(pair, options.rouge_l_beta);
    const auto b = bleu(pair, options.bleu);
    for (std::size_t i = 0; i < r.bleu.size(); ++i) r.bleu[i] += b.scores[i];
    const auto s = bert_prf_cached(pair, emb);
    r.bert_p += s.precision;
    r.bert_r += s.recall;
    r.bert_f1 += s.f1;
  }
  const double n = static_cast<double>(r.item_count);
  r.rouge1 /= n;
  r.rouge_l /= n;
  for (double& b : r.bleu) b /= n;
  r.bert_p /= n;
  r.bert_r /= n;
  r.bert_f1 /= n;
  return r;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

DiversityTable diversity_report(std::span<const GeneratedQuery> generated, const Corpus& corpus,
                                const EmbeddingModel& model, const std::filesystem::path& out_path) {
  DiversityTable table;
  std::unordered_map<std::string, Embedding> originals;
  std::map<QueryType, std::pair<double, std::size_t>> sums;
  for (const auto& g : generated) {
    const auto& qa = corpus.at(g.source_qa_id);
    auto [it, inserted] = originals.try_emplace(qa.id);
    if (inserted) it->second = embed(model, qa.question);
    const auto e = embed(model, g.text);
    const double d = std::clamp(1.0 - cosine(e.values, it->second.values), 0.0, 2.0);
    table.rows.push_back({g.source_qa_id, g.query_type, d});
    auto& [sum, count] = sums[g.query_type];
    sum += d;
    ++count;
  }
  for (const auto& [type, sc] : sums) table.type_means[type] = sc.first / static_cast<double>(sc.second);

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw Error(Errc::IoError, out_path.string(), "cannot open for writing");
    out << "qa_id,query_type,distance\n";
    for (const auto& row : table.rows)
      out << csv_field(row.qa_id) << ',' << to_string(row.query_type) << ',' << fmt::format("{:.9f}", row.distance)
          << '\n';
    for (const auto& [type, mean] : table.type_means)
      out << "#mean," << to_string(type) << ',' << fmt::format("{:.9f}", mean) << '\n';
    if (!out) throw Error(Errc::IoError, out_path.string(), "write failed");
  }
  return table;
}

std::string report_record(const RetrievalReport& report, std::string_view label) {
  json j = {{"label", label}, {"kind", "retrieval"}, {"queries", report.query_count}, {"mrr", report.mrr}};
  for (auto k : report.k_set) {
    j[fmt::format("hit@{}", k)] = report.hit.at(k);
    j[fmt::format("precision@{}", k)] = report.precision.at(k);
    j[fmt::format("ndcg@{}", k)] = report.ndcg.at(k);
  }
  return j.dump();
}

std::string report_record(const GenerationReport& report, std::string_view label) {
  json j = {{"label", label},         {"kind", "generation"},   {"items", report.item_count},
            {"rouge1", report.rouge1}, {"rouge_l", report.rouge_l}, {"bert_p", report.bert_p},
            {"bert_r", report.bert_r}, {"bert_f1", report.bert_f1}};
  for (std::size_t i = 0; i < report.bleu.size(); ++i) j[fmt::format("bleu{}", i + 1)] = report.bleu[i];
  return j.dump();
}

namespace {

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& cells) {
    std::string s;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (c) s += "  ";
      s += c == 0 ? fmt::format("{:<{}}", cells[c], width[c]) : fmt::format("{:>{}}", cells[c], width[c]);
    }
    return s + '\n';
  };
  std::string out = line(header);
  for (const auto& row : rows) out += line(row);
  return out;
}

}  // namespace

std::string report_table(std::span<const std::pair<std::string, RetrievalReport>> rows) {
  if (rows.empty()) return {};
  std::vector<std::string> header = {"run", "MRR"};
  const auto& ks = rows.front().second.k_set;
  for (auto k : ks) header.push_back(fmt::format("Precision@{}", k));
  for (auto k : ks) header.push_back(fmt::format("Hit@{}", k));
  for (auto k : ks) header.push_back(fmt::format("NDCG@{}", k));
  std::vector<std::vector<std::string>> cells;
  for (const auto& [label, r] : rows) {
    std::vector<std::string> row = {label, fmt::format("{:.3f}", r.mrr)};
    for (auto k : ks) row.push_back(fmt::format("{:.3f}", r.precision.at(k)));
    for (auto k : ks) row.push_back(fmt::format("{:.3f}", r.hit.at(k)));
    for (auto k : ks) row.push_back(fmt::format("{:.3f}", r.ndcg.at(k)));
    cells.push_back(std::move(row));
  }
  return render_table(header, cells);
}

std::string report_table(std::span<const std::pair<std::string, GenerationReport>> rows) {
  if (rows.empty()) return {};
  std::vector<std::string> header = {"run", "ROUGE-1", "ROUGE-L"};
  for (std::size_t i = 0; i < rows.front().second.bleu.size(); ++i) header.push_back(fmt::format("BLEU-{}", i + 1));
  header.insert(header.end(), {"BERT-P", "BERT-R", "BERT-F1"});
  std::vector<std::vector<std::string>> cells;
  for (const auto& [label, r] : rows) {
    std::vector<std::string> row = {label, fmt::format("{:.3f}", r.rouge1), fmt::format("{:.3f}", r.rouge_l)};
    for (double b : r.bleu) row.push_back(fmt::format("{:.3f}", b));
    row.push_back(fmt::format("{:.3f}", r.bert_p));
    row.push_back(fmt::format("{:.3f}", r.bert_r));
    row.push_back(fmt::format("{:.3f}", r.bert_f1));
    cells.push_back(std::move(row));
  }
  return render_table(header, cells);
}

}  // namespace ragtune
