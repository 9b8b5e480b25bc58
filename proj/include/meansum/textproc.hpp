#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

#include "meansum/subword.hpp"

namespace meansum {

// Word tokenization used by the surface metrics: lowercase ASCII letters,
// strip ASCII punctuation, split on whitespace. Bytes >= 0x80 pass through so
// non-ASCII text still tokenizes stably. No stemming, no stopword removal.
inline std::vector<std::string> word_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (c < 0x80 && std::isspace(c)) {
      flush();
    } else if (c < 0x80 && std::ispunct(c)) {
      // punctuation splits nothing, it just vanishes
    } else if (c < 0x80) {
      cur += char(std::tolower(c));
    } else {
      cur += char(c);
    }
  }
  flush();
  return out;
}

// Sentence splitting for the extractive baselines: sentence-final punctuation
// followed by whitespace (or end of text) closes a sentence; a "</DOC>"
// delimiter always closes one and is dropped. Sentences keep their verbatim
// bytes, trimmed of surrounding whitespace.
inline std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  auto flush = [&](std::string_view piece) {
    std::size_t b = 0, e = piece.size();
    while (b < e && std::isspace((unsigned char)piece[b])) ++b;
    while (e > b && std::isspace((unsigned char)piece[e - 1])) --e;
    if (e > b) out.emplace_back(piece.substr(b, e - b));
  };
  const std::string& delim = Vocabulary::delim_piece();
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, delim.size(), delim) == 0) {
      flush(text.substr(start, i - start));
      i += delim.size();
      start = i;
      continue;
    }
    char c = text[i];
    if (c == '.' || c == '!' || c == '?') {
      std::size_t j = i;
      while (j + 1 < text.size() &&
             (text[j + 1] == '.' || text[j + 1] == '!' || text[j + 1] == '?')) {
        ++j;
      }
      if (j + 1 >= text.size() || std::isspace((unsigned char)text[j + 1])) {
        flush(text.substr(start, j + 1 - start));
        i = j + 1;
        start = i;
        continue;
      }
      i = j + 1;
      continue;
    }
    ++i;
  }
  flush(text.substr(start));
  return out;
}

}  // namespace meansum
