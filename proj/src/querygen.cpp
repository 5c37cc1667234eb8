#include "ragtune/querygen.hpp"

#include <unicode/uchar.h>
#include <unicode/uscript.h>

#include <algorithm>
#include <atomic>
#include <thread>
#include <unordered_set>

#include "ragtune/embedder.hpp"
#include "ragtune/error.hpp"
#include "ragtune/rng.hpp"

namespace ragtune {

namespace {

#include "query_templates.inc"

constexpr std::string_view kTypeNames[] = {"concept_seeking", "fact_seeking", "keyword",
                                           "misspelled", "web_search"};

std::size_t type_index(QueryType t) { return static_cast<std::size_t>(t); }

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

// Minimal UTF-8 decoding; invalid bytes map to U+FFFD one byte at a time.
std::u32string decode_utf8(std::string_view s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto b = static_cast<unsigned char>(s[i]);
    int len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 0;
    if (len == 0 || i + len > s.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    char32_t c = len == 1 ? b : b & (0xFF >> (len + 1));
    bool ok = true;
    for (int k = 1; k < len; ++k) {
      const auto cb = static_cast<unsigned char>(s[i + k]);
      if ((cb >> 6) != 0x2) ok = false;
      c = (c << 6) | (cb & 0x3F);
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(c);
    i += len;
  }
  return out;
}

std::string encode_utf8(std::u32string_view s) {
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

bool is_han(char32_t c) {
  UErrorCode status = U_ZERO_ERROR;
  return uscript_getScript(static_cast<UChar32>(c), &status) == USCRIPT_HAN && U_SUCCESS(status);
}

bool is_han_token(std::string_view token) {
  const auto cps = decode_utf8(token);
  return cps.size() == 1 && is_han(cps[0]);
}

bool has_han(std::string_view text) {
  for (char32_t c : decode_utf8(text))
    if (is_han(c)) return true;
  return false;
}

/// Space-joined, except between two Han tokens.
std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0 && !(is_han_token(tokens[i - 1]) && is_han_token(tokens[i]))) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

std::vector<std::size_t> content_positions(const TokenSeq& tokens) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (!is_stopword(tokens[i])) pos.push_back(i);
  if (pos.empty())
    for (std::size_t i = 0; i < tokens.size(); ++i) pos.push_back(i);
  return pos;
}

constexpr std::string_view kConceptFramesEn[] = {
    "In general terms, ",
    "Conceptually speaking, ",
    "Could you explain the overall idea behind this: ",
    "What are the principles underlying the following question: ",
    "From a broader perspective, ",
};
constexpr std::string_view kConceptFramesZh[] = {
    "請概括說明：",
    "從整體概念來看，",
    "請解釋背後的原理：",
    "一般而言，",
};
constexpr std::string_view kFactFramesEn[] = {
    "What is the {}?",
    "Which {} applies?",
    "What exactly is the {}?",
};
constexpr std::string_view kFactFramesZh[] = {
    "{}是什麼？",
    "{}為何？",
};

template <std::size_t N>
std::string_view pick(const std::string_view (&items)[N], Rng& rng) {
  return items[rng.below(N)];
}

std::string fill(std::string_view frame, std::string_view value) {
  std::string out(frame);
  replace_all(out, "{}", value);
  return out;
}

std::string synth_concept(const QAPair& qa, Rng& rng) {
  const std::string question = trim(qa.question);
  const auto frame = has_han(question) ? pick(kConceptFramesZh, rng) : pick(kConceptFramesEn, rng);
  return std::string(frame) + question;
}

std::string synth_fact(const TokenSeq& tokens, bool han, Rng& rng) {
  const auto pos = content_positions(tokens);
  const std::size_t width = std::min<std::size_t>(3, pos.size());
  const std::size_t start = rng.below(pos.size() - width + 1);
  std::vector<std::string> window;
  for (std::size_t i = start; i < start + width; ++i) window.push_back(tokens[pos[i]]);
  const auto frame = han ? pick(kFactFramesZh, rng) : pick(kFactFramesEn, rng);
  return fill(frame, join_tokens(window));
}

std::string synth_keyword(const TokenSeq& tokens) {
  std::vector<std::string> kept;
  for (std::size_t i : content_positions(tokens)) kept.push_back(tokens[i]);
  return join_tokens(kept);
}

std::string synth_misspelled(const QAPair& qa, Rng& rng) {
  auto cps = decode_utf8(qa.question);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i + 1 < cps.size(); ++i)
    if (u_isalpha(static_cast<UChar32>(cps[i])) && u_isalpha(static_cast<UChar32>(cps[i + 1])) &&
        cps[i] != cps[i + 1])
      candidates.push_back(i);
  if (candidates.empty()) return qa.question;
  const std::size_t at = candidates[rng.below(candidates.size())];
  std::swap(cps[at], cps[at + 1]);
  return encode_utf8(cps);
}

std::string synth_web(const TokenSeq& tokens, Rng& rng) {
  const auto pos = content_positions(tokens);
  constexpr std::size_t kMaxContent = 6;
  const std::size_t start = pos.size() <= kMaxContent ? 0 : rng.below(pos.size() - kMaxContent + 1);
  const std::size_t last = std::min(pos.size(), start + kMaxContent) - 1;
  std::vector<std::string> kept(tokens.begin() + static_cast<std::ptrdiff_t>(pos[start]),
                                tokens.begin() + static_cast<std::ptrdiff_t>(pos[last]) + 1);
  return join_tokens(kept);
}

// Strips a leading list marker ("1.", "2)", "(3)", "4、", "-", "*", "•").
// Returns true when the line carried a numeric marker.
bool strip_marker(std::string& line) {
  std::size_t i = 0;
  const bool paren = !line.empty() && line[0] == '(';
  if (paren) ++i;
  const std::size_t digits_at = i;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > digits_at && i - digits_at <= 3) {
    static constexpr std::string_view kTerminators[] = {".", ")", ":", "]", "、", "：", "．", "）"};
    for (auto term : kTerminators) {
      if (line.compare(i, term.size(), term) == 0) {
        if (paren && term != ")" && term != "）") break;
        line = trim(std::string_view(line).substr(i + term.size()));
        return true;
      }
    }
  }
  static constexpr std::string_view kBullets[] = {"- ", "* ", "+ ", "•"};
  for (auto bullet : kBullets) {
    if (line.compare(0, bullet.size(), bullet) == 0) {
      line = trim(std::string_view(line).substr(bullet.size()));
      break;
    }
  }
  return false;
}

void strip_quotes(std::string& s) {
  static constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
      {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"「", "」"}, {"《", "》"}};
  for (const auto& [open, close] : kPairs) {
    if (s.size() >= open.size() + close.size() && s.compare(0, open.size(), open) == 0 &&
        s.compare(s.size() - close.size(), close.size(), close) == 0) {
      s = trim(std::string_view(s).substr(open.size(), s.size() - open.size() - close.size()));
      return;
    }
  }
}

}  // namespace

std::string_view to_string(QueryType type) noexcept { return kTypeNames[type_index(type)]; }

QueryType parse_query_type(std::string_view name) {
  for (QueryType t : kAllQueryTypes)
    if (to_string(t) == name) return t;
  throw Error(Errc::InvalidArgument, std::string(name), "unknown query type");
}

std::string_view to_string(QueryOrigin origin) noexcept {
  return origin == QueryOrigin::Llm ? "llm" : "synthetic";
}

QueryOrigin parse_query_origin(std::string_view name) {
  if (name == "llm") return QueryOrigin::Llm;
  if (name == "synthetic") return QueryOrigin::Synthetic;
  throw Error(Errc::InvalidArgument, std::string(name), "unknown query origin");
}

std::string_view generation_system_prompt() noexcept {
  return "Reply with a numbered list containing one query per line and nothing else.";
}

std::string_view prompt_template(QueryType type, PromptLanguage language) {
  return language == PromptLanguage::Chinese ? kChineseTemplates[type_index(type)]
                                             : kEnglishTemplates[type_index(type)];
}

std::string render_prompt(QueryType type, const QAPair& qa, int k_per_type, PromptLanguage language) {
  if (k_per_type < 1) throw Error(Errc::InvalidArgument, "k_per_type", "must be >= 1");
  std::string out(prompt_template(type, language));
  const std::string k = std::to_string(k_per_type);
  replace_all(out, "[K]", k);
  replace_all(out, "(K)", k);
  // Context goes in last so that brackets inside the QA text are left alone.
  replace_all(out, "[context_str]", "Q: " + qa.question + "\nA: " + qa.answer);
  return out;
}

std::vector<std::string> parse_generated(std::string_view raw, int expected_k) {
  if (expected_k < 1) throw Error(Errc::InvalidArgument, "expected_k", "must be >= 1");

  std::vector<std::pair<std::string, bool>> lines;
  bool any_numbered = false;
  std::size_t start = 0;
  while (start <= raw.size()) {
    const auto end = std::min(raw.find('\n', start), raw.size());
    std::string line = trim(raw.substr(start, end - start));
    start = end + 1;
    if (line.empty()) continue;
    const bool numbered = strip_marker(line);
    any_numbered = any_numbered || numbered;
    strip_quotes(line);
    if (!line.empty()) lines.emplace_back(std::move(line), numbered);
  }

  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (auto& [line, numbered] : lines) {
    // With a numbered list, unnumbered lines are preamble or commentary.
    if (any_numbered && !numbered) continue;
    if (!seen.insert(line).second) continue;
    out.push_back(std::move(line));
    if (out.size() == static_cast<std::size_t>(expected_k)) break;
  }
  if (out.empty()) throw Error(Errc::NoQueriesFound, "", "no parseable queries in completion");
  return out;
}

GenerationResult generate_queries(const Corpus& corpus, const std::set<QueryType>& types,
                                  GenerationClient& client, const GenerationOptions& options) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus.name());
  if (types.empty()) throw Error(Errc::InvalidArgument, "types", "no query types requested");
  if (options.k_per_type < 1) throw Error(Errc::InvalidArgument, "k_per_type", "must be >= 1");

  const std::vector<QueryType> type_list(types.begin(), types.end());
  const std::size_t n_cells = corpus.size() * type_list.size();

  struct Cell {
    std::vector<std::string> texts;
    std::optional<std::string> error;
  };
  std::vector<Cell> cells(n_cells);
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t c = next++; c < n_cells; c = next++) {
      const auto& qa = corpus[c / type_list.size()];
      const QueryType type = type_list[c % type_list.size()];
      try {
        const auto prompt = render_prompt(type, qa, options.k_per_type, options.language);
        const auto raw = client.complete(std::string(generation_system_prompt()), prompt, options.decoding);
        cells[c].texts = parse_generated(raw, options.k_per_type);
      } catch (const std::exception& e) {
        cells[c].error = e.what();
      }
    }
  };

  const std::size_t n_workers = std::clamp<std::size_t>(options.max_concurrency, 1, n_cells);
  if (n_workers == 1) {
    work();
  } else {
    std::vector<std::jthread> workers;
    for (std::size_t i = 0; i < n_workers; ++i) workers.emplace_back(work);
  }

  GenerationResult result;
  for (std::size_t p = 0; p < corpus.size(); ++p) {
    std::size_t count = 0;
    for (std::size_t t = 0; t < type_list.size(); ++t) {
      auto& cell = cells[p * type_list.size() + t];
      if (cell.error) {
        result.failures.push_back({corpus[p].id, type_list[t], *cell.error});
        continue;
      }
      for (auto& text : cell.texts) {
        result.queries.push_back({corpus[p].id, type_list[t], std::move(text), QueryOrigin::Llm});
        ++count;
      }
    }
    result.per_pair_counts.emplace_back(corpus[p].id, count);
  }
  if (result.queries.empty())
    throw Error(Errc::AllFailed, corpus.name(),
                result.failures.empty() ? "" : "first failure: " + result.failures.front().message);
  return result;
}

GeneratedQuery synthesize_query(const QAPair& qa, QueryType type, std::uint64_t seed) {
  const TokenSeq tokens = tokenize(qa.question);
  if (tokens.empty()) throw Error(Errc::EmptyQuestion, qa.id);

  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(type) + 1));
  const bool han = has_han(qa.question);
  std::string text;
  switch (type) {
    case QueryType::ConceptSeeking: text = synth_concept(qa, rng); break;
    case QueryType::FactSeeking: text = synth_fact(tokens, han, rng); break;
    case QueryType::Keyword: text = synth_keyword(tokens); break;
    case QueryType::Misspelled: text = synth_misspelled(qa, rng); break;
    case QueryType::WebSearch: text = synth_web(tokens, rng); break;
  }
  return {qa.id, type, std::move(text), QueryOrigin::Synthetic};
}

GenerationResult synthesize_queries(const Corpus& corpus, const std::set<QueryType>& types,
                                    int k_per_type, std::uint64_t seed) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, corpus.name());
  if (types.empty()) throw Error(Errc::InvalidArgument, "types", "no query types requested");
  if (k_per_type < 1) throw Error(Errc::InvalidArgument, "k_per_type", "must be >= 1");

  GenerationResult result;
  for (const auto& qa : corpus.entries()) {
    std::size_t count = 0;
    for (QueryType type : types) {
      std::unordered_set<std::string> seen;
      for (int item = 0; item < k_per_type; ++item) {
        const auto item_seed =
            derive_seed(seed, qa.id + "\x1f" + std::string(to_string(type)) + "\x1f" + std::to_string(item));
        auto q = synthesize_query(qa, type, item_seed);
        if (q.text.empty() || !seen.insert(q.text).second) continue;
        result.queries.push_back(std::move(q));
        ++count;
      }
    }
    result.per_pair_counts.emplace_back(qa.id, count);
  }
  return result;
}

const std::vector<std::string_view>& latin_stopwords() {
  static const std::vector<std::string_view> words = {
      "a",     "about", "all",   "also",  "am",    "an",    "and",   "any",   "are",
      "as",    "at",    "be",    "been",  "being", "but",   "by",    "can",   "could",
      "did",   "do",    "does",  "for",   "from",  "had",   "has",   "have",  "he",
      "her",   "here",  "his",   "how",   "i",     "if",    "in",    "into",  "is",
      "it",    "its",   "just",  "may",   "me",    "might", "must",  "my",    "no",
      "not",   "of",    "on",    "only",  "or",    "our",   "please","shall", "she",
      "should","so",    "some",  "than",  "that",  "the",   "their", "them",  "then",
      "there", "these", "they",  "this",  "those", "to",    "was",   "we",    "were",
      "what",  "when",  "where", "which", "who",   "whom",  "whose", "why",   "will",
      "with",  "would", "you",   "your",
  };
  return words;
}

const std::vector<std::string_view>& han_function_characters() {
  static const std::vector<std::string_view> chars = {
      "的", "了", "是", "在", "和", "與", "与", "及", "或", "嗎", "吗", "呢", "吧",
      "啊", "之", "而", "並", "并", "也", "就", "都", "把", "被", "對", "对", "於",
      "于", "以", "其", "這", "这", "那", "個", "个", "我", "你", "他", "她", "們",
      "们", "請", "请", "要", "會", "会", "能", "可", "如", "何", "什", "麼", "么",
      "怎", "哪",
  };
  return chars;
}

bool is_stopword(std::string_view token) {
  static const std::unordered_set<std::string_view> all = [] {
    std::unordered_set<std::string_view> s(latin_stopwords().begin(), latin_stopwords().end());
    s.insert(han_function_characters().begin(), han_function_characters().end());
    return s;
  }();
  return all.count(token) != 0;
}

}  // namespace ragtune
