#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "meansum/corpus.hpp"
#include "meansum/textproc.hpp"

namespace meansum {

// ---------------------------------------------------------------------------
// ROUGE over word-token sequences. F = 2PR/(P+R), 0 when P+R = 0. Empty
// candidate or reference scores 0 and marks the flag when one is supplied.
// ---------------------------------------------------------------------------

using Words = std::vector<std::string>;

inline double f_measure(double overlap, double cand_n, double ref_n) {
  if (cand_n <= 0 || ref_n <= 0) return 0.0;
  double p = overlap / cand_n;
  double r = overlap / ref_n;
  if (p + r == 0.0) return 0.0;
  return 2.0 * p * r / (p + r);
}

// Clipped n-gram overlap F score; n=1 gives ROUGE-1, n=2 ROUGE-2.
inline double rouge_n_f(const Words& cand, const Words& ref, std::size_t n,
                        bool* degenerate = nullptr) {
  if (cand.size() < n || ref.size() < n) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  auto grams = [n](const Words& w) {
    std::map<std::vector<std::string>, std::size_t> m;
    for (std::size_t i = 0; i + n <= w.size(); ++i) {
      m[std::vector<std::string>(w.begin() + i, w.begin() + i + n)]++;
    }
    return m;
  };
  auto cg = grams(cand);
  auto rg = grams(ref);
  double overlap = 0.0;
  for (const auto& [gram, c] : cg) {
    auto it = rg.find(gram);
    if (it != rg.end()) overlap += double(std::min(c, it->second));
  }
  return f_measure(overlap, double(cand.size() - n + 1),
                   double(ref.size() - n + 1));
}

inline double rouge_1_f(const Words& cand, const Words& ref,
                        bool* degenerate = nullptr) {
  return rouge_n_f(cand, ref, 1, degenerate);
}

inline double rouge_2_f(const Words& cand, const Words& ref,
                        bool* degenerate = nullptr) {
  return rouge_n_f(cand, ref, 2, degenerate);
}

inline std::size_t lcs_length(const Words& a, const Words& b) {
  std::size_t n = a.size(), m = b.size();
  std::vector<std::size_t> prev(m + 1, 0), cur(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1
                                    : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

inline double rouge_l_f(const Words& cand, const Words& ref,
                        bool* degenerate = nullptr) {
  if (cand.empty() || ref.empty()) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  double l = double(lcs_length(cand, ref));
  return f_measure(l, double(cand.size()), double(ref.size()));
}

// ---------------------------------------------------------------------------
// reference-free metrics
// ---------------------------------------------------------------------------

// Mean ROUGE-1 F between the summary and each of the k reviews.
inline double word_overlap(const Words& summary,
                           const std::vector<Words>& reviews) {
  if (reviews.empty()) throw InputError("word_overlap: no reviews");
  double total = 0.0;
  for (const Words& r : reviews) total += rouge_1_f(summary, r);
  return total / double(reviews.size());
}

// Arithmetic mean rounded half-up to the nearest star.
inline int round_mean_rating(const std::vector<int>& ratings) {
  if (ratings.empty()) throw InputError("round_mean_rating: empty rating list");
  double sum = 0.0;
  for (int r : ratings) {
    if (r < 1 || r > 5) throw InputError("round_mean_rating: star out of range");
    sum += double(r);
  }
  double mean = sum / double(ratings.size());
  return int(std::floor(mean + 0.5));
}

// Fraction of the summary's n-gram positions absent from every input review.
// Undefined when the summary has fewer than n tokens.
inline std::optional<double> ngram_novelty(const Words& summary,
                                           const std::vector<Words>& reviews,
                                           std::size_t n) {
  if (summary.size() < n) return std::nullopt;
  std::set<std::vector<std::string>> seen;
  for (const Words& r : reviews) {
    for (std::size_t i = 0; i + n <= r.size(); ++i) {
      seen.insert(std::vector<std::string>(r.begin() + i, r.begin() + i + n));
    }
  }
  std::size_t total = summary.size() - n + 1;
  std::size_t novel = 0;
  for (std::size_t i = 0; i + n <= summary.size(); ++i) {
    std::vector<std::string> gram(summary.begin() + i, summary.begin() + i + n);
    if (!seen.count(gram)) ++novel;
  }
  return double(novel) / double(total);
}

}  // namespace meansum
