#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "meansum/rng.hpp"

namespace meansum {

// Raised for malformed operator-supplied inputs; the CLI maps it to exit 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invertible byte-level subword vocabulary.
//
// Pieces are raw byte strings. The base alphabet is all 256 bytes, so every
// input is encodable and decode(encode(s)) == s holds for arbitrary strings.
// Whitespace is preserved by keeping it attached to the following word inside
// pieces (" great" is one piece after enough merges). Training grows pieces by
// frequency-ranked pair merges; encoding segments each word chunk by greedy
// longest match. The end-of-review delimiter "</DOC>" is matched literally
// before any subword matching and is never produced by merges.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kDelim = 1;
  static constexpr std::size_t kByteBase = 2;
  static constexpr std::size_t kBaseSize = kByteBase + 256;

  static const std::string& pad_piece() {
    static const std::string s = "<PAD>";
    return s;
  }
  static const std::string& delim_piece() {
    static const std::string s = "</DOC>";
    return s;
  }

  Vocabulary() = default;

  std::size_t size() const { return pieces_.size(); }

  const std::string& piece(std::size_t id) const {
    if (id >= pieces_.size()) throw InputError("vocabulary: piece id out of range");
    return pieces_[id];
  }

  std::uint64_t hash() const { return fnv1a64(serialize()); }

  // ---- training ----

  // Grows a vocabulary of at most target_size pieces over the corpus. Merges
  // stop early when no adjacent pair repeats. Deterministic: ties between
  // equally frequent pairs break toward the lexicographically smaller pair.
  static Vocabulary train(const std::vector<std::string>& texts,
                          std::size_t target_size) {
    if (texts.empty()) throw InputError("vocabulary: empty training corpus");
    if (target_size <= kBaseSize) {
      throw InputError("vocabulary: target size " + std::to_string(target_size) +
                       " not above base alphabet " + std::to_string(kBaseSize));
    }
    Vocabulary v;
    v.init_base();

    // chunk histogram as id sequences
    std::map<std::string, std::uint64_t> chunk_counts;
    for (const std::string& t : texts) {
      segment(t, [&](std::string_view chunk, bool is_delim) {
        if (!is_delim) chunk_counts[std::string(chunk)]++;
      });
    }
    struct Word {
      std::vector<std::uint32_t> ids;
      std::uint64_t count;
    };
    std::vector<Word> words;
    words.reserve(chunk_counts.size());
    for (const auto& [chunk, count] : chunk_counts) {
      Word w;
      w.count = count;
      w.ids.reserve(chunk.size());
      for (unsigned char b : chunk) w.ids.push_back(std::uint32_t(kByteBase + b));
      words.push_back(std::move(w));
    }

    while (v.pieces_.size() < target_size) {
      std::unordered_map<std::uint64_t, std::uint64_t> pair_counts;
      for (const Word& w : words) {
        for (std::size_t i = 0; i + 1 < w.ids.size(); ++i) {
          pair_counts[pack(w.ids[i], w.ids[i + 1])] += w.count;
        }
      }
      std::uint64_t best_key = 0, best_count = 0;
      std::string best_str;
      for (const auto& [key, count] : pair_counts) {
        if (count < 2) continue;
        std::string s = v.pieces_[key >> 32] + v.pieces_[key & 0xffffffffu];
        if (s == pad_piece() || s == delim_piece()) continue;
        if (count > best_count || (count == best_count && s < best_str)) {
          best_count = count;
          best_key = key;
          best_str = std::move(s);
        }
      }
      if (best_count == 0) break;
      std::uint32_t left = std::uint32_t(best_key >> 32);
      std::uint32_t right = std::uint32_t(best_key & 0xffffffffu);
      std::uint32_t fresh = std::uint32_t(v.pieces_.size());
      v.pieces_.push_back(best_str);
      for (Word& w : words) {
        std::vector<std::uint32_t>& ids = w.ids;
        std::size_t out = 0;
        for (std::size_t i = 0; i < ids.size();) {
          if (i + 1 < ids.size() && ids[i] == left && ids[i + 1] == right) {
            ids[out++] = fresh;
            i += 2;
          } else {
            ids[out++] = ids[i++];
          }
        }
        ids.resize(out);
      }
    }
    v.build_index();
    return v;
  }

  // ---- encode / decode ----

  std::vector<std::size_t> encode(std::string_view text) const {
    std::vector<std::size_t> out;
    segment(text, [&](std::string_view chunk, bool is_delim) {
      if (is_delim) {
        out.push_back(kDelim);
        return;
      }
      std::size_t i = 0;
      while (i < chunk.size()) {
        std::size_t try_len = std::min(max_piece_len_, chunk.size() - i);
        for (;; --try_len) {
          auto it = match_.find(std::string(chunk.substr(i, try_len)));
          if (it != match_.end()) {
            out.push_back(it->second);
            i += try_len;
            break;
          }
          // single bytes always match, so try_len never reaches 0
        }
      }
    });
    return out;
  }

  std::string decode(const std::vector<std::size_t>& ids) const {
    std::string out;
    for (std::size_t id : ids) {
      if (id >= pieces_.size()) throw InputError("decode: token id out of range");
      if (id == kPad) continue;  // padding is invisible text
      out += pieces_[id];
    }
    return out;
  }

  // ---- serialization ----

  // One escaped piece per line; the line index below the header equals the id.
  std::string serialize() const {
    std::ostringstream os;
    os << "meansum-vocab v1\n";
    os << "special pad=" << kPad << " delim=" << kDelim
       << " byte_base=" << kByteBase << "\n";
    os << "pieces " << pieces_.size() << "\n";
    for (const std::string& p : pieces_) os << escape(p) << "\n";
    return os.str();
  }

  static Vocabulary parse(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != "meansum-vocab v1") {
      throw InputError("vocabulary file: bad or missing header");
    }
    if (!std::getline(is, line) || line.rfind("special ", 0) != 0) {
      throw InputError("vocabulary file: missing special header");
    }
    if (!std::getline(is, line) || line.rfind("pieces ", 0) != 0) {
      throw InputError("vocabulary file: missing piece count");
    }
    std::size_t n = std::stoull(line.substr(7));
    Vocabulary v;
    v.pieces_.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::getline(is, line)) throw InputError("vocabulary file: truncated");
      v.pieces_.push_back(unescape(line));
    }
    if (v.pieces_.size() <= kByteBase || v.pieces_[kPad] != pad_piece() ||
        v.pieces_[kDelim] != delim_piece()) {
      throw InputError("vocabulary file: special pieces malformed");
    }
    v.build_index();
    return v;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write vocabulary file: " + path);
    f << serialize();
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read vocabulary file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
  }

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, std::size_t> match_;  // specials excluded
  std::size_t max_piece_len_ = 1;

  static std::uint64_t pack(std::uint32_t a, std::uint32_t b) {
    return (std::uint64_t(a) << 32) | b;
  }

  void init_base() {
    pieces_.clear();
    pieces_.push_back(pad_piece());
    pieces_.push_back(delim_piece());
    for (int b = 0; b < 256; ++b) pieces_.push_back(std::string(1, char(b)));
  }

  void build_index() {
    match_.clear();
    max_piece_len_ = 1;
    for (std::size_t id = kByteBase; id < pieces_.size(); ++id) {
      match_.emplace(pieces_[id], id);
      max_piece_len_ = std::max(max_piece_len_, pieces_[id].size());
    }
  }

  static bool is_space(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }

  // Splits text into word chunks (whitespace attaches to the following word)
  // and literal delimiter occurrences. Merge and match boundaries never cross
  // chunk edges.
  template <class Fn>
  static void segment(std::string_view text, Fn&& fn) {
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t delim = text.find(delim_piece(), pos);
      std::size_t end = delim == std::string_view::npos ? text.size() : delim;
      std::size_t i = pos;
      while (i < end) {
        std::size_t start = i;
        while (i < end && is_space(text[i])) ++i;
        while (i < end && !is_space(text[i])) ++i;
        fn(text.substr(start, i - start), false);
      }
      if (delim == std::string_view::npos) return;
      fn(std::string_view(delim_piece()), true);
      pos = delim + delim_piece().size();
    }
  }

  static std::string escape(const std::string& s) {
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned char c : s) {
      if (c == '\\') {
        out += "\\\\";
      } else if (c < 0x21 || c > 0x7e) {
        out += "\\x";
        out += hex[c >> 4];
        out += hex[c & 0xf];
      } else {
        out += char(c);
      }
    }
    return out;
  }

  static std::string unescape(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size();) {
      if (s[i] == '\\') {
        if (i + 1 < s.size() && s[i + 1] == '\\') {
          out += '\\';
          i += 2;
        } else if (i + 3 < s.size() && s[i + 1] == 'x') {
          out += char(std::stoi(s.substr(i + 2, 2), nullptr, 16));
          i += 4;
        } else {
          throw InputError("vocabulary file: bad escape");
        }
      } else {
        out += s[i++];
      }
    }
    return out;
  }
};

}  // namespace meansum
