#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/uscript.h>

#include <stdexcept>

#include "ragtune/embedder.hpp"

namespace ragtune {

namespace {

void append_utf8(std::string& out, char32_t c) {
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

enum class CharClass { Han, Word, Mark, Separator };

CharClass classify(UChar32 c) {
  UErrorCode status = U_ZERO_ERROR;
  if (uscript_getScript(c, &status) == USCRIPT_HAN && U_SUCCESS(status) && u_isalpha(c))
    return CharClass::Han;
  if (u_isalnum(c)) return CharClass::Word;
  const auto type = u_charType(c);
  if (type == U_NON_SPACING_MARK || type == U_COMBINING_SPACING_MARK) return CharClass::Mark;
  return CharClass::Separator;
}

/// Walks the NFC form of `text`, handing each lowercased codepoint to
/// `on_char` with its class.
template <typename F>
void scan(std::string_view text, F&& on_char) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalizer unavailable");
  const auto source = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) throw std::runtime_error("ICU NFC normalization failed");

  for (int32_t i = 0; i < normalized.length();) {
    const UChar32 c = normalized.char32At(i);
    i += U16_LENGTH(c);
    const auto cls = classify(c);
    on_char(static_cast<char32_t>(cls == CharClass::Han ? c : u_tolower(c)), cls);
  }
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  scan(text, [&](char32_t c, CharClass cls) {
    switch (cls) {
      case CharClass::Han:
        flush();
        append_utf8(current, c);
        flush();
        break;
      case CharClass::Word:
        append_utf8(current, c);
        break;
      case CharClass::Mark:
        // Combining marks only extend a running word.
        if (!current.empty()) append_utf8(current, c);
        break;
      case CharClass::Separator:
        flush();
        break;
    }
  });
  flush();
  return tokens;
}

std::u32string normalize_for_grams(std::string_view text) {
  std::u32string body;
  bool pending_space = false;
  bool in_word = false;
  scan(text, [&](char32_t c, CharClass cls) {
    const bool keep = cls == CharClass::Han || cls == CharClass::Word ||
                      (cls == CharClass::Mark && in_word);
    if (!keep) {
      pending_space = true;
      in_word = false;
      return;
    }
    if (pending_space && !body.empty()) body.push_back(U' ');
    pending_space = false;
    body.push_back(c);
    in_word = true;
  });
  if (body.empty()) return body;
  return U"  " + body + U"  ";
}

}  // namespace ragtune
