#include <cmath>
#include <set>

#include "doctest.h"
#include "ragtune/metrics.hpp"
#include "ragtune/rng.hpp"
#include "ragtune/synthetic_corpus.hpp"
#include "support.hpp"

using namespace ragtune;
using testing::error_code_of;

namespace {

RankedList list_with_relevant_at(const std::string& qid, std::size_t rank, std::size_t length) {
  RankedList l{qid, {}, false};
  for (std::size_t i = 1; i <= length; ++i)
    l.hits.push_back({i == rank ? "rel-" + qid : "x" + std::to_string(i), 1.0 / static_cast<double>(i)});
  return l;
}

RelevanceJudgments judgments_for(const std::vector<RankedList>& lists) {
  RelevanceJudgments j;
  for (const auto& l : lists) j.relevant[l.query_id] = "rel-" + l.query_id;
  return j;
}

TokenSeq seq(std::initializer_list<const char*> xs) { return TokenSeq(xs.begin(), xs.end()); }

TokenSeq random_seq(Rng& rng, std::size_t max_len, std::size_t alphabet) {
  TokenSeq s(rng.below(max_len + 1));
  for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return s;
}

// Longest common subsequence by trying every subset of the shorter side.
std::size_t lcs_brute(const TokenSeq& a, const TokenSeq& b) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    TokenSeq sub;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (mask & (1u << i)) sub.push_back(a[i]);
    std::size_t j = 0;
    for (const auto& t : b)
      if (j < sub.size() && t == sub[j]) ++j;
    if (j == sub.size()) best = std::max(best, sub.size());
  }
  return best;
}

// Clipped matches by striking out used reference positions one at a time.
std::size_t clipped_brute(const TokenSeq& c, const TokenSeq& r, std::size_t n) {
  if (c.size() < n || r.size() < n) return 0;
  std::vector<bool> used(r.size() - n + 1, false);
  std::size_t m = 0;
  for (std::size_t i = 0; i + n <= c.size(); ++i)
    for (std::size_t j = 0; j + n <= r.size(); ++j)
      if (!used[j] && std::equal(c.begin() + i, c.begin() + i + n, r.begin() + j)) {
        used[j] = true;
        ++m;
        break;
      }
  return m;
}

}  // namespace

TEST_CASE("ranking metric hand fixtures") {
  const std::vector<RankedList> lists{list_with_relevant_at("a", 1, 5), list_with_relevant_at("b", 2, 5),
                                      list_with_relevant_at("c", 4, 5)};
  const auto j = judgments_for(lists);
  CHECK(hit_at_k(lists, j, 3) == doctest::Approx(2.0 / 3.0));
  CHECK(hit_at_k(lists, j, 3) == doctest::Approx(0.6667).epsilon(1e-4));
  CHECK(mrr(lists, j) == doctest::Approx((1 + 0.5 + 0.25) / 3));
  CHECK(mrr(lists, j) == doctest::Approx(0.5833).epsilon(1e-4));
  CHECK(hit_at_k(lists, j, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(hit_at_k(lists, j, 5) == 1.0);

  const std::vector<RankedList> second{list_with_relevant_at("q", 2, 5)};
  CHECK(ndcg_at_k(second, judgments_for(second), 3) == doctest::Approx(1.0 / std::log2(3.0)));
  CHECK(ndcg_at_k(second, judgments_for(second), 3) == doctest::Approx(0.6309).epsilon(1e-4));
  CHECK(ndcg_at_k(second, judgments_for(second), 1) == 0.0);

  const std::vector<RankedList> fourth{list_with_relevant_at("q", 4, 5)};
  CHECK(precision_at_k(fourth, judgments_for(fourth), 3) == 0.0);
  CHECK(ndcg_at_k(fourth, judgments_for(fourth), 3) == 0.0);

  const std::vector<RankedList> firsts{list_with_relevant_at("a", 1, 3), list_with_relevant_at("b", 1, 1)};
  const auto jf = judgments_for(firsts);
  CHECK(hit_at_k(firsts, jf, 1) == 1.0);
  CHECK(mrr(firsts, jf) == 1.0);
  for (std::size_t k : {1u, 3u, 10u}) CHECK(ndcg_at_k(firsts, jf, k) == doctest::Approx(1.0));

  const std::vector<RankedList> never{list_with_relevant_at("a", 0, 4), {"b", {}, true}};
  const auto jn = judgments_for(never);
  CHECK(hit_at_k(never, jn, 3) == 0.0);
  CHECK(mrr(never, jn) == 0.0);
  CHECK(precision_at_k(never, jn, 3) == 0.0);
}

TEST_CASE("precision@3 ceiling with a single relevant answer") {
  // With one relevant answer per query and Hit@3 = 1, Precision@3 is 1/3 (0.333 at three places).
  const std::vector<RankedList> lists{list_with_relevant_at("a", 1, 3), list_with_relevant_at("b", 3, 3),
                                      list_with_relevant_at("c", 2, 10)};
  const auto j = judgments_for(lists);
  CHECK(hit_at_k(lists, j, 3) == 1.0);
  const double p = precision_at_k(lists, j, 3);
  CHECK(p == doctest::Approx(1.0 / 3.0));
  CHECK(std::round(p * 1000) / 1000 == 0.333);
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    std::vector<RankedList> ls;
    for (int q = 0; q < 5; ++q) ls.push_back(list_with_relevant_at("q" + std::to_string(q), rng.below(8), 7));
    for (std::size_t k = 1; k <= 8; ++k) CHECK(precision_at_k(ls, judgments_for(ls), k) <= 1.0 / static_cast<double>(k) + 1e-15);
  }
}

TEST_CASE("ranking metric errors") {
  const std::vector<RankedList> lists{list_with_relevant_at("a", 1, 3)};
  RelevanceJudgments empty;
  CHECK(error_code_of([&] { hit_at_k(lists, empty, 1); }) == Errc::MissingJudgment);
  CHECK(error_code_of([&] { mrr(lists, empty); }) == Errc::MissingJudgment);
  CHECK(error_code_of([&] { precision_at_k(lists, empty, 1); }) == Errc::MissingJudgment);
  CHECK(error_code_of([&] { ndcg_at_k(lists, empty, 1); }) == Errc::MissingJudgment);
  CHECK(error_code_of([&] { hit_at_k(lists, judgments_for(lists), 0); }) == Errc::InvalidArgument);
  CHECK(error_code_of([&] { hit_at_k({}, judgments_for(lists), 1); }) == Errc::EmptyEvalSet);
  RelevanceJudgments graded;
  graded.grades["a"] = {{"x1", 0.0}};
  CHECK(error_code_of([&] { ndcg_at_k(lists, graded, 3); }) == Errc::ZeroIdealGain);
}

TEST_CASE("graded ndcg equals a brute-force ideal ordering") {
  Rng rng(8);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    RelevanceJudgments j;
    RankedList l{"q", {}, false};
    std::vector<double> grades;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = static_cast<double>(rng.below(4));
      grades.push_back(g);
      j.grades["q"]["d" + std::to_string(i)] = g;
      l.hits.push_back({"d" + std::to_string(i), 0.0});
    }
    if (std::all_of(grades.begin(), grades.end(), [](double g) { return g == 0; })) {
      j.grades["q"]["d0"] = 1;
      grades[0] = 1;
    }
    rng.shuffle(l.hits);
    for (std::size_t k = 1; k <= n + 1; ++k) {
      auto dcg = [&](const std::vector<double>& order) {
        double s = 0;
        for (std::size_t i = 0; i < std::min(k, order.size()); ++i) s += (std::pow(2.0, order[i]) - 1) / std::log2(i + 2.0);
        return s;
      };
      std::vector<double> perm = grades;
      std::sort(perm.begin(), perm.end());
      double ideal = 0;
      do ideal = std::max(ideal, dcg(perm));
      while (std::next_permutation(perm.begin(), perm.end()));
      std::vector<double> actual;
      for (const auto& h : l.hits) actual.push_back(j.grades["q"][h.doc_id]);
      const std::vector<RankedList> one{l};
      CHECK(ndcg_at_k(one, j, k) == doctest::Approx(dcg(actual) / ideal).epsilon(1e-12));
    }
  }
}

TEST_CASE("ranking metric monotonicity and range") {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<RankedList> ls;
    for (int q = 0; q < 8; ++q) ls.push_back(list_with_relevant_at("q" + std::to_string(q), rng.below(9), 8));
    const auto j = judgments_for(ls);
    double prev_hit = 0, prev_ndcg = 0;
    for (std::size_t k = 1; k <= 9; ++k) {
      const double h = hit_at_k(ls, j, k), n = ndcg_at_k(ls, j, k), p = precision_at_k(ls, j, k);
      CHECK(h >= prev_hit);
      CHECK(n >= prev_ndcg);
      // One relevant doc per query: NDCG@k never exceeds Hit@k.
      CHECK(n <= h + 1e-15);
      for (double v : {h, n, p}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
      prev_hit = h;
      prev_ndcg = n;
    }
    const double m = mrr(ls, j);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    auto shuffled = ls;
    rng.shuffle(shuffled);
    CHECK(mrr(shuffled, j) == doctest::Approx(m).epsilon(1e-15));
  }
}

TEST_CASE("rouge-1") {
  CHECK(rouge1({seq({"the", "cat"}), seq({"the", "cat", "sat"})}) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge1({seq({"a", "b"}), seq({"a", "b"})}) == 1.0);
  CHECK(rouge1({seq({"x"}), seq({"a", "b"})}) == 0.0);
  // Clipping: a repeated candidate token counts once per reference occurrence.
  CHECK(rouge1({seq({"the", "the", "the"}), seq({"the", "cat"})}) == 0.5);
  CHECK(rouge1({seq({"the", "cat"}), seq({"the", "cat", "sat"})}, Rouge1Mode::F1) == doctest::Approx(0.8));
  CHECK(error_code_of([] { rouge1({seq({"a"}), {}}); }) == Errc::EmptyReference);
  CHECK(rouge1({{}, seq({"a"})}) == 0.0);
  CHECK(parse_rouge1_mode("f1") == Rouge1Mode::F1);
  CHECK(to_string(Rouge1Mode::Recall) == "recall");
}

TEST_CASE("rouge-l") {
  const TextPair p{seq({"a", "c", "d", "b"}), seq({"a", "b", "c", "d"})};
  CHECK(lcs_length(p.candidate, p.reference) == 3);
  CHECK(rouge_l(p) == doctest::Approx(0.75));
  CHECK(rouge_l({seq({"a", "b"}), seq({"a", "b"})}, 3.0) == doctest::Approx(1.0));
  CHECK(rouge_l({seq({"x"}), seq({"a", "b"})}) == 0.0);
  // R = 1/2, P = 1: beta 2 leans on recall.
  const TextPair half{seq({"a"}), seq({"a", "b"})};
  CHECK(rouge_l(half, 1.0) == doctest::Approx(2.0 / 3.0));
  CHECK(rouge_l(half, 2.0) == doctest::Approx(5 * 0.5 / (4 * 0.5 + 1)));
  CHECK(error_code_of([] { rouge_l({{}, seq({"a"})}); }) == Errc::EmptyText);
  CHECK(error_code_of([] { rouge_l({seq({"a"}), {}}); }) == Errc::EmptyText);
}

TEST_CASE("lcs agrees with subsequence enumeration") {
  // Every pair of strings over {a, b} up to length 4, then random pairs up to 8 over {a, b, c}.
  std::vector<TokenSeq> all{{}};
  for (std::size_t len = 1; len <= 4; ++len)
    for (std::uint32_t code = 0; code < (1u << len); ++code) {
      TokenSeq s;
      for (std::size_t i = 0; i < len; ++i) s.push_back((code >> i) & 1 ? "b" : "a");
      all.push_back(s);
    }
  for (const auto& a : all)
    for (const auto& b : all) REQUIRE(lcs_length(a, b) == lcs_brute(a, b));
  Rng rng(3);
  for (int t = 0; t < 2000; ++t) {
    const auto a = random_seq(rng, 8, 3), b = random_seq(rng, 8, 3);
    REQUIRE(lcs_length(a, b) == lcs_brute(a, b));
    REQUIRE(lcs_length(a, a) == a.size());
  }
}

TEST_CASE("n-gram clipping agrees with a strike-out oracle") {
  Rng rng(4);
  for (int t = 0; t < 3000; ++t) {
    const auto c = random_seq(rng, 8, 3), r = random_seq(rng, 8, 3);
    const auto prof = ngram_profile({c, r}, 4);
    for (std::size_t n = 1; n <= 4; ++n) {
      REQUIRE(prof.matches[n - 1] == clipped_brute(c, r, n));
      REQUIRE(prof.totals[n - 1] == (c.size() >= n ? c.size() - n + 1 : 0));
      REQUIRE(prof.precisions[n - 1] >= 0.0);
      REQUIRE(prof.precisions[n - 1] <= 1.0);
    }
    if (!c.empty()) {
      REQUIRE(prof.brevity_penalty > 0.0);
      REQUIRE(prof.brevity_penalty <= 1.0);
    }
  }
}

TEST_CASE("bleu") {
  const TextPair same{seq({"a", "b", "c", "d", "e"}), seq({"a", "b", "c", "d", "e"})};
  CHECK(bleu(same).scores == std::vector<double>{1.0, 1.0, 1.0, 1.0});

  const auto short_ = bleu({seq({"a", "b", "c"}), seq({"a", "b", "c", "d"})});
  CHECK(short_.profile.brevity_penalty == doctest::Approx(std::exp(1.0 - 4.0 / 3.0)));
  CHECK(short_.scores[3] == doctest::Approx(0.7165).epsilon(1e-4));
  CHECK(short_.scores[2] == doctest::Approx(std::exp(-1.0 / 3.0)));
  CHECK(bleu({seq({"a", "b", "c"}), seq({"a", "b", "c", "d"})}, {4, true}).scores[3] == 0.0);

  CHECK(bleu({seq({"x", "y"}), seq({"a", "b"})}).scores == std::vector<double>{0, 0, 0, 0});
  CHECK(bleu({{}, seq({"a"})}).scores == std::vector<double>{0, 0, 0, 0});
  CHECK(error_code_of([] { bleu({seq({"a"}), {}}); }) == Errc::EmptyReference);

  // BLEU-2 by hand: p1 = 3/4, p2 = 1/3, c = 4 > r = 3.
  const auto b = bleu({seq({"a", "b", "x", "c"}), seq({"a", "b", "c"})});
  CHECK(b.scores[0] == doctest::Approx(0.75));
  CHECK(b.scores[1] == doctest::Approx(std::sqrt(0.75 / 3.0)));

  Rng rng(6);
  for (int t = 0; t < 500; ++t) {
    const auto c = random_seq(rng, 8, 3), r = random_seq(rng, 8, 3);
    if (r.empty()) continue;
    for (double s : bleu({c, r}).scores) {
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }
}

TEST_CASE("bert precision recall f1") {
  const auto model = init_model(1u << 12, 64, 7);
  const auto same = make_text_pair("patent fee renewal", "patent fee renewal");
  const auto s = bert_prf(same, model);
  CHECK(s.precision == doctest::Approx(1.0));
  CHECK(s.recall == doctest::Approx(1.0));
  CHECK(s.f1 == doctest::Approx(1.0));

  const auto one = bert_prf(make_text_pair("fee", "the annual fee is paid online"), model);
  CHECK(one.precision == doctest::Approx(1.0));
  CHECK(one.recall < 1.0);

  Rng rng(1);
  const char* words[] = {"patent", "fee", "design", "trademark", "online", "form", "grant", "appeal"};
  for (int t = 0; t < 100; ++t) {
    std::string a, b;
    for (std::uint64_t i = 0, n = 1 + rng.below(5); i < n; ++i) a += std::string(words[rng.below(8)]) + " ";
    for (std::uint64_t i = 0, n = 1 + rng.below(5); i < n; ++i) b += std::string(words[rng.below(8)]) + " ";
    const auto r = bert_prf(make_text_pair(a, b), model);
    CHECK(r.f1 >= std::min(r.precision, r.recall) - 1e-12);
    CHECK(r.f1 <= std::max(r.precision, r.recall) + 1e-12);
    for (double v : {r.precision, r.recall, r.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(error_code_of([&] { bert_prf(make_text_pair("", "x"), model); }) == Errc::EmptyText);
}

TEST_CASE("evaluate_retrieval with an oracle searcher") {
  std::vector<EvalQuery> queries;
  for (int i = 0; i < 6; ++i) queries.push_back({"q" + std::to_string(i), "text", "doc" + std::to_string(i), {}});
  const Searcher oracle = [](const EvalQuery& q, std::size_t depth) {
    RankedList l;
    l.hits.push_back({q.positive_answer_id, 1.0});
    for (std::size_t i = 1; i < std::min<std::size_t>(depth, 5); ++i) l.hits.push_back({"other" + std::to_string(i), 0.5});
    return l;
  };
  const std::vector<std::size_t> ks{3, 1, 3};
  const auto r = evaluate_retrieval(oracle, queries, ks);
  CHECK(r.k_set == std::vector<std::size_t>{1, 3});
  CHECK(r.query_count == 6);
  CHECK(r.mrr == 1.0);
  CHECK(r.hit.at(1) == 1.0);
  CHECK(r.hit.at(3) == 1.0);
  CHECK(r.ndcg.at(3) == 1.0);
  CHECK(r.precision.at(1) == 1.0);
  CHECK(r.precision.at(3) == doctest::Approx(1.0 / 3.0));
  CHECK(evaluate_retrieval(oracle, queries, ks) == r);

  CHECK(error_code_of([&] { evaluate_retrieval(oracle, {}, ks); }) == Errc::EmptyEvalSet);
  const std::vector<std::size_t> none;
  CHECK(error_code_of([&] { evaluate_retrieval(oracle, queries, none); }) == Errc::InvalidArgument);

  const auto rec = report_record(r, "oracle");
  CHECK(rec.find("\"hit@3\":1.0") != std::string::npos);
  CHECK(rec.find('\n') == std::string::npos);
  const std::vector<std::pair<std::string, RetrievalReport>> rows{{"oracle", r}};
  CHECK(report_table(rows).find("Precision@3") != std::string::npos);
}

TEST_CASE("evaluate_retrieval over real indexes") {
  const auto corpus = testing::small_corpus(10);
  const auto model = init_model(1u << 12, 32, 4);
  const auto index = build_index(model, corpus);
  std::vector<EvalQuery> queries;
  for (const auto& qa : corpus.entries()) queries.push_back({qa.id + "#a", qa.answer, qa.id, {}});
  const std::vector<std::size_t> ks{1, 3};
  // Querying with the answer text itself is a self-match.
  const auto dense = evaluate_retrieval(index, model, queries, ks);
  CHECK(dense.hit.at(1) == 1.0);
  const auto lexical = evaluate_retrieval(Bm25Index(corpus), queries, ks);
  CHECK(lexical.hit.at(1) == 1.0);
  auto reversed = queries;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(evaluate_retrieval(index, model, reversed, ks).mrr == doctest::Approx(dense.mrr).epsilon(1e-15));
}

TEST_CASE("evaluate_generation") {
  const auto model = init_model(1u << 12, 32, 4);
  const std::map<std::string, std::string> refs{{"a", "the fee is due yearly"}, {"b", "file form 3 online"}};
  const auto perfect = evaluate_generation(refs, refs, model);
  CHECK(perfect.item_count == 2);
  CHECK(perfect.rouge1 == 1.0);
  CHECK(perfect.rouge_l == doctest::Approx(1.0));
  CHECK(perfect.bleu[0] == 1.0);
  CHECK(perfect.bert_f1 == doctest::Approx(1.0));

  std::map<std::string, std::string> half = refs;
  half["b"] = "zzz qqq";
  const auto h = evaluate_generation(half, refs, model);
  CHECK(h.rouge1 == doctest::Approx(0.5));
  CHECK(h.bleu[0] == doctest::Approx(0.5));

  std::map<std::string, std::string> empty_pred = refs;
  empty_pred["a"] = "";
  const auto e = evaluate_generation(empty_pred, refs, model);
  CHECK(e.rouge1 == doctest::Approx(0.5));
  CHECK(e.bert_p == doctest::Approx(0.5));

  CHECK(error_code_of([&] { evaluate_generation({{"a", "x"}}, refs, model); }) == Errc::IdSetMismatch);
  CHECK(error_code_of([&] { evaluate_generation({{"a", "x"}, {"b", "y"}, {"c", "z"}}, refs, model); }) ==
        Errc::IdSetMismatch);
  CHECK(error_code_of([&] { evaluate_generation({}, {}, model); }) == Errc::EmptyEvalSet);

  const auto rec = report_record(h, "half");
  CHECK(rec.find("\"bleu4\"") != std::string::npos);
  const std::vector<std::pair<std::string, GenerationReport>> rows{{"half", h}};
  CHECK(report_table(rows).find("BERT-F1") != std::string::npos);
}

TEST_CASE("diversity report") {
  testing::TempDir dir;
  const auto corpus = make_synthetic_corpus(200, 20240501);
  const auto model = init_model(1u << 16, 64, 2);
  const std::set<QueryType> types{QueryType::Keyword, QueryType::Misspelled};
  auto gen = synthesize_queries(corpus, types, 2, 9).queries;
  gen.push_back({corpus[0].id, QueryType::FactSeeking, corpus[0].question, QueryOrigin::Synthetic});
  const auto table = diversity_report(gen, corpus, model, dir / "d.csv");
  REQUIRE(table.rows.size() == gen.size());
  CHECK(table.rows.back().distance < 1e-6);
  for (const auto& r : table.rows) {
    CHECK(r.distance >= 0.0);
    CHECK(r.distance <= 2.0);
  }
  CHECK(table.type_means.at(QueryType::Misspelled) < table.type_means.at(QueryType::Keyword));

  const auto csv = testing::read_text(dir / "d.csv");
  CHECK(csv.rfind("qa_id,query_type,distance\n", 0) == 0);
  CHECK(csv.find("#mean,keyword,") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(gen.size() + 1 + 3));

  const std::vector<GeneratedQuery> dangling{{"nope", QueryType::Keyword, "x", QueryOrigin::Llm}};
  CHECK(error_code_of([&] { diversity_report(dangling, corpus, model); }) == Errc::DanglingQueryReference);
}
