#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "json.hpp"

#include "doctest.h"
#include "ragtune/embedder.hpp"
#include "ragtune/rng.hpp"
#include "ragtune/synthetic_corpus.hpp"
#include "ragtune/xxhash64.hpp"
#include "support.hpp"

using namespace ragtune;
using testing::error_code_of;

namespace {

double l2(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::set<std::string> keys_of(std::string_view text) {
  std::set<std::string> out;
  for (const auto& [k, n] : feature_keys(tokenize(text), text)) out.insert(k);
  return out;
}

std::set<std::string> with_prefix(const std::set<std::string>& keys, std::string_view prefix) {
  std::set<std::string> out;
  for (const auto& k : keys)
    if (k.rfind(prefix, 0) == 0) out.insert(k);
  return out;
}

std::string random_text(Rng& rng) {
  static const char* words[] = {"patent", "fee",  "專", "利", "renewal", "2024", "Form", "申請",
                                "MARK",   "café", "!",  "?", "design",  "年",   "of",   "examination"};
  std::string s;
  const auto n = 1 + rng.below(8);
  for (std::uint64_t i = 0; i < n; ++i) s += std::string(words[rng.below(16)]) + (rng.below(3) ? " " : "");
  return s;
}

}  // namespace

TEST_CASE("tokenize") {
  CHECK(tokenize("發明專利") == TokenSeq{"發", "明", "專", "利"});
  CHECK(tokenize("Patent Law 2024!") == TokenSeq{"patent", "law", "2024"});
  CHECK(tokenize("").empty());
  CHECK(tokenize("  ?!。 ").empty());
  CHECK(tokenize("新型Patent專利2024年") == TokenSeq{"新", "型", "patent", "專", "利", "2024", "年"});
  // Decomposed and precomposed forms agree after NFC.
  CHECK(tokenize("Cafe\xCC\x81") == tokenize("Caf\xC3\xA9"));
  CHECK(tokenize("Caf\xC3\xA9") == TokenSeq{"caf\xC3\xA9"});
  CHECK(tokenize("ÉCOLE") == TokenSeq{"école"});
  CHECK(tokenize("e-mail, x_y") == TokenSeq{"e", "mail", "x", "y"});
}

TEST_CASE("normalize_for_grams pads and collapses") {
  CHECK(normalize_for_grams("  Hello,   World!! ") == U"  hello world  ");
  CHECK(normalize_for_grams("專利") == U"  專利  ");
  CHECK(normalize_for_grams("...").empty());
}

TEST_CASE("abc and acb feature keys") {
  const auto abc = keys_of("abc");
  const auto acb = keys_of("acb");
  // "  abc  " gives grams "  a", " ab", "abc", "bc ", "c  ".
  CHECK(abc == std::set<std::string>{"u:abc", "c:  a", "c: ab", "c:abc", "c:bc ", "c:c  "});
  CHECK(acb == std::set<std::string>{"u:acb", "c:  a", "c: ac", "c:acb", "c:cb ", "c:b  "});
  std::set<std::string> shared;
  std::set_intersection(abc.begin(), abc.end(), acb.begin(), acb.end(), std::inserter(shared, shared.end()));
  // The only common key is the leading boundary gram; the unigrams differ.
  CHECK(shared == std::set<std::string>{"c:  a"});
  CHECK(with_prefix(abc, "u:") != with_prefix(acb, "u:"));
  CHECK(with_prefix(abc, "c:") != with_prefix(acb, "c:"));
}

TEST_CASE("feature keys count repeats") {
  const auto keys = feature_keys(tokenize("the the the"), "the the the");
  std::map<std::string, int> m(keys.begin(), keys.end());
  CHECK(m["u:the"] == 3);
  CHECK(m["b:the the"] == 2);
  CHECK(m["c:the"] == 3);
  CHECK(m["c:he "] == 3);
  CHECK(m["c:  t"] == 1);
}

TEST_CASE("featurize matches a direct hashing oracle") {
  Rng rng(11);
  for (std::uint64_t seed : {0ULL, 42ULL}) {
    for (std::uint32_t feat_dim : {7u, 1024u, 1u << 18}) {
      const EmbeddingModel model(feat_dim, 1, seed, std::vector<float>(feat_dim, 1.0f));
      for (int trial = 0; trial < 25; ++trial) {
        const auto text = random_text(rng);
        std::map<std::uint32_t, double> expected;
        for (const auto& [key, count] : feature_keys(tokenize(text), text))
          expected[static_cast<std::uint32_t>(xxh64(key, seed) % feat_dim)] += 1.0 + std::log(count);
        double norm = 0;
        for (const auto& [i, w] : expected) norm += w * w;
        norm = std::sqrt(norm);

        const auto fv = featurize(text, model);
        if (expected.empty()) {
          CHECK(fv.empty());
          continue;
        }
        REQUIRE(fv.size() == expected.size());
        std::size_t k = 0;
        for (const auto& [i, w] : expected) {
          CHECK(fv.indices[k] == i);
          CHECK(fv.indices[k] < feat_dim);
          CHECK(fv.weights[k] == doctest::Approx(w / norm).epsilon(1e-12));
          ++k;
        }
        CHECK(std::is_sorted(fv.indices.begin(), fv.indices.end()));
        CHECK(std::abs(l2(fv.weights) - 1.0) < 1e-9);
        CHECK(featurize(text, model) == fv);
      }
    }
  }
  const EmbeddingModel model(16, 1, 0, std::vector<float>(16, 1.0f));
  CHECK(featurize("", model).empty());
  CHECK(featurize("!?", model).empty());
}

TEST_CASE("golden feature indices") {
  std::ifstream in(RAGTUNE_SOURCE_DIR "/tests/fixtures/golden_features.jsonl");
  REQUIRE(in);
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    const auto feat_dim = j["feat_dim"].get<std::uint32_t>();
    const EmbeddingModel model(feat_dim, 1, j["hash_seed"].get<std::uint64_t>(), std::vector<float>(feat_dim, 0.5f));
    INFO(j["text"].get<std::string>());
    CHECK(featurize(j["text"].get<std::string>(), model).indices == j["indices"].get<std::vector<std::uint32_t>>());
    ++rows;
  }
  CHECK(rows == 20);
}

TEST_CASE("a single transposition keeps shared character grams") {
  const auto corpus = make_synthetic_corpus(200, 20240501);
  const auto model = init_model(1u << 14, 4, 1);
  std::set<std::string> words;
  for (const auto& qa : corpus.entries())
    for (const auto& t : tokenize(qa.question + " " + qa.answer))
      if (t.size() >= 4 && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isalpha(c); }))
        words.insert(t);
  REQUIRE(words.size() > 50);
  std::size_t checked = 0;
  for (const auto& w : words) {
    for (std::size_t i = 0; i + 1 < w.size(); ++i) {
      if (w[i] == w[i + 1]) continue;
      auto v = w;
      std::swap(v[i], v[i + 1]);
      const auto a = with_prefix(keys_of(w), "c:");
      const auto b = with_prefix(keys_of(v), "c:");
      std::vector<std::string> common;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
      REQUIRE(!common.empty());
      const auto fa = featurize(w, model), fb = featurize(v, model);
      std::vector<std::uint32_t> shared;
      std::set_intersection(fa.indices.begin(), fa.indices.end(), fb.indices.begin(), fb.indices.end(),
                            std::back_inserter(shared));
      REQUIRE(!shared.empty());
      ++checked;
    }
  }
  CHECK(checked > 200);
}

TEST_CASE("embed is unit norm or flagged") {
  const auto model = init_model(1u << 12, 32, 3);
  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto text = random_text(rng);
    const auto e = embed(model, text);
    if (tokenize(text).empty()) continue;
    CHECK_FALSE(e.degenerate);
    CHECK(e.values.size() == 32);
    CHECK(std::abs(l2(e.values) - 1.0) < 1e-6);
    CHECK(embed(model, text).values == e.values);
  }
  for (const char* t : {"", "  ", "?!。"}) {
    const auto e = embed(model, t);
    CHECK(e.degenerate);
    CHECK(e.values == std::vector<double>(32, 0.0));
  }
  // An all-zero projection also degenerates.
  const EmbeddingModel zero(8, 3, 0, std::vector<float>(24, 0.0f));
  CHECK(embed(zero, "patent").degenerate);
}

TEST_CASE("cosine") {
  const std::vector<double> x{1, 2, 3}, y{-2, 0.5, 7}, e1{1, 0, 0}, e2{0, 1, 0}, z{0, 0, 0};
  CHECK(cosine(x, x) == doctest::Approx(1.0));
  CHECK(cosine(e1, e2) == 0.0);
  CHECK(cosine(x, z) == 0.0);
  CHECK(cosine(x, std::vector<double>{-1, -2, -3}) == doctest::Approx(-1.0));
  CHECK(error_code_of([&] { cosine(x, std::vector<double>{1, 0}); }) ==
        Errc::DimensionMismatch);
  Rng rng(9);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> u(6), v(6);
    for (auto& a : u) a = rng.uniform(-1, 1);
    for (auto& a : v) a = rng.uniform(-1, 1);
    const double c = cosine(u, v);
    CHECK(c == cosine(v, u));
    CHECK(c >= -1.0);
    CHECK(c <= 1.0);
  }
}

TEST_CASE("init_model") {
  const auto a = init_model(300, 20, 7);
  const auto b = init_model(300, 20, 7);
  CHECK(a == b);
  CHECK(a.fingerprint() == b.fingerprint());
  const auto c = init_model(300, 20, 8);
  CHECK(a.fingerprint() != c.fingerprint());
  CHECK_FALSE(a == c);

  const double bound = init_bound(300, 20);
  CHECK(bound == doctest::Approx(std::sqrt(6.0 / 320.0)));
  double sum = 0, sq = 0;
  for (float x : a.columns()) {
    CHECK(std::abs(static_cast<double>(x)) <= bound);
    sum += x;
    sq += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(a.columns().size());
  CHECK(std::abs(sum / n) < 0.05 * bound);
  CHECK(sq / n == doctest::Approx(bound * bound / 3.0).epsilon(0.05));

  // Entries come from the stream in storage order.
  Rng rng(7);
  CHECK(a.columns()[0] == static_cast<float>(rng.uniform(-bound, bound)));

  CHECK(init_model(10, 4, 1, 99).hash_seed() == 99);
  CHECK(init_model(10, 4, 1).hash_seed() == 1);
  CHECK(error_code_of([] { init_model(0, 4, 1); }) == Errc::InvalidDims);
  CHECK(error_code_of([] { init_model(4, 0, 1); }) == Errc::InvalidDims);
  CHECK(error_code_of([] { EmbeddingModel(4, 4, 0, std::vector<float>(15)); }) == Errc::InvalidDims);
}

TEST_CASE("fingerprint follows edits") {
  auto m = init_model(64, 8, 2);
  const auto before = m.fingerprint();
  m.mutable_column(3)[1] += 0.25f;
  CHECK(m.fingerprint() != before);
  m.mutable_column(3)[1] -= 0.25f;
  m.seal();
  CHECK(m.fingerprint() == before);
  const EmbeddingModel other_seed(64, 8, 3, std::vector<float>(m.columns().begin(), m.columns().end()));
  CHECK(other_seed.fingerprint() != before);
}

TEST_CASE("scaling the projection leaves cosines unchanged") {
  const auto model = init_model(1u << 10, 16, 4);
  const std::vector<std::string> texts{"patent renewal fee", "trademark opposition", "專利年費", "design filing"};
  for (float c : {0.001f, 0.5f, 3.0f, 1000.0f}) {
    auto scaled = model;
    for (float& x : scaled.mutable_columns()) x *= c;
    scaled.seal();
    for (const auto& s : texts)
      for (const auto& t : texts)
        CHECK(cosine(embed(scaled, s).values, embed(scaled, t).values) ==
              doctest::Approx(cosine(embed(model, s).values, embed(model, t).values)).epsilon(1e-6));
  }
}

TEST_CASE("model persistence") {
  testing::TempDir dir;
  const auto model = init_model(50, 6, 21, 1234);
  const auto path = dir / "m.bin";
  persist_model(model, path);
  const auto restored = restore_model(path);
  CHECK(restored == model);
  CHECK(restored.hash_seed() == 1234);
  CHECK(restored.fingerprint() == model.fingerprint());
  CHECK(embed(restored, "patent fee 專利").values == embed(model, "patent fee 專利").values);

  const auto bytes = testing::read_text(path);
  REQUIRE(bytes.size() == 40 + 50 * 6 * 4);
  CHECK(bytes.substr(0, 8) == "RTEMBMDL");
  auto u32_at = [&](std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[off + i])) << (8 * i);
    return v;
  };
  CHECK(u32_at(8) == 1);
  CHECK(u32_at(12) == 50);
  CHECK(u32_at(16) == 6);
  // Row-major payload: entry (row, feature) sits at 40 + 4 * (row * feat_dim + feature).
  for (std::uint32_t row : {0u, 3u, 5u})
    for (std::uint32_t f : {0u, 17u, 49u}) {
      float x;
      const std::uint32_t bits = u32_at(40 + 4 * (row * 50 + f));
      std::memcpy(&x, &bits, 4);
      CHECK(x == model.at(row, f));
    }

  auto corrupt = [&](std::string data) {
    testing::write_text(dir / "bad.bin", data);
    return error_code_of([&] { restore_model(dir / "bad.bin"); });
  };
  CHECK(corrupt(bytes.substr(0, bytes.size() - 3)) == Errc::CorruptFile);
  CHECK(corrupt(bytes.substr(0, 20)) == Errc::CorruptFile);
  auto flipped = bytes;
  flipped[100] ^= 0x01;
  CHECK(corrupt(flipped) == Errc::CorruptFile);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(corrupt(magic) == Errc::CorruptFile);
  auto future = bytes;
  future[8] = 2;
  CHECK(corrupt(future) == Errc::UnsupportedVersion);
  CHECK(error_code_of([&] { restore_model(dir / "absent.bin"); }) == Errc::FileNotFound);
}
