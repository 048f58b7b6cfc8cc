#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mixaudit {

namespace detail {

enum class CharClass { kSpace, kLetter, kDigit, kSymbol };

// Decodes one UTF-8 sequence starting at `pos`; malformed bytes decode to U+FFFD.
inline char32_t decode_utf8(std::string_view text, std::size_t& pos) {
  const auto lead = static_cast<unsigned char>(text[pos]);
  int extra = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++pos;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
  } else {
    ++pos;
    return 0xFFFD;
  }
  if (pos + extra >= text.size()) {
    ++pos;
    return 0xFFFD;
  }
  for (int i = 1; i <= extra; ++i) {
    const auto cont = static_cast<unsigned char>(text[pos + i]);
    if ((cont & 0xC0) != 0x80) {
      ++pos;
      return 0xFFFD;
    }
    cp = (cp << 6) | (cont & 0x3F);
  }
  pos += extra + 1;
  return cp;
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline bool is_unicode_space(char32_t cp) {
  switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
      return true;
    default:
      return cp >= 0x2000 && cp <= 0x200A;
  }
}

// Punctuation and symbol blocks outside ASCII; everything else non-ASCII counts as a letter.
inline bool is_unicode_symbol(char32_t cp) {
  return (cp >= 0xA1 && cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 ||
         (cp >= 0x2010 && cp <= 0x2027) || (cp >= 0x2030 && cp <= 0x205E) ||
         (cp >= 0x2070 && cp <= 0x2BFF) || (cp >= 0x3001 && cp <= 0x303F) ||
         (cp >= 0xFE30 && cp <= 0xFE4F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
         cp == 0xFFFD || (cp >= 0x1F000 && cp <= 0x1FAFF);
}

inline CharClass classify(char32_t cp) {
  if (is_unicode_space(cp)) return CharClass::kSpace;
  if (cp < 0x80) {
    if ((cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z')) return CharClass::kLetter;
    if (cp >= '0' && cp <= '9') return CharClass::kDigit;
    if (cp < 0x20 || cp == 0x7F) return CharClass::kSpace;
    return CharClass::kSymbol;
  }
  if (cp >= 0x0660 && cp <= 0x0669) return CharClass::kDigit;
  if (cp >= 0xFF10 && cp <= 0xFF19) return CharClass::kDigit;
  if (is_unicode_symbol(cp)) return CharClass::kSymbol;
  return CharClass::kLetter;
}

// Simple case folding for ASCII, Latin-1, Greek and Cyrillic capitals.
inline char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 32;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 32;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 80;
  return cp;
}

}  // namespace detail

// Lowercased letter runs, digit runs, and single punctuation/symbol characters.
// Pure; safe to call from any thread.
inline std::vector<std::string> tokenize(std::string_view text) {
  using detail::CharClass;
  std::vector<std::string> tokens;
  std::string current;
  CharClass current_class = CharClass::kSpace;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
    current_class = CharClass::kSpace;
  };
  std::size_t pos = 0;
  while (pos < text.size()) {
    const char32_t cp = detail::decode_utf8(text, pos);
    const CharClass cls = detail::classify(cp);
    switch (cls) {
      case CharClass::kSpace:
        flush();
        break;
      case CharClass::kSymbol:
        flush();
        detail::append_utf8(current, cp);
        flush();
        break;
      case CharClass::kLetter:
      case CharClass::kDigit:
        if (cls != current_class) flush();
        current_class = cls;
        detail::append_utf8(current, detail::to_lower(cp));
        break;
    }
  }
  flush();
  return tokens;
}

}  // namespace mixaudit
