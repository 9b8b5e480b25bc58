#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "meansum/metrics.hpp"
#include "meansum/rng.hpp"
#include "meansum/tensor.hpp"
#include "meansum/textproc.hpp"

namespace meansum {

// ---------------------------------------------------------------------------
// word embeddings
// ---------------------------------------------------------------------------

struct EmbeddingTable {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> vectors;

  // unknown-word policy: absent words contribute nothing
  const std::vector<double>* find(const std::string& word) const {
    auto it = vectors.find(word);
    return it == vectors.end() ? nullptr : &it->second;
  }

  // header "V d", then one "word v1 .. vd" line per word
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write embedding file: " + path);
    f << vectors.size() << " " << dim << "\n";
    char buf[32];
    for (const auto& [word, vec] : vectors) {
      f << word;
      for (double v : vec) {
        std::snprintf(buf, sizeof buf, " %.8g", v);
        f << buf;
      }
      f << "\n";
    }
  }

  static EmbeddingTable load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read embedding file: " + path);
    EmbeddingTable t;
    std::size_t count = 0;
    if (!(f >> count >> t.dim)) throw InputError("embedding file: bad header");
    for (std::size_t i = 0; i < count; ++i) {
      std::string word;
      if (!(f >> word)) throw InputError("embedding file: truncated");
      std::vector<double> vec(t.dim);
      for (double& v : vec) {
        if (!(f >> v)) throw InputError("embedding file: truncated vector for " + word);
      }
      t.vectors.emplace(std::move(word), std::move(vec));
    }
    return t;
  }
};

namespace detail {

// Modified Gram-Schmidt on the columns of Q [n, d].
inline void orthonormalize_columns(std::vector<std::vector<double>>& q) {
  std::size_t d = q.size();
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      double dot = 0.0;
      for (std::size_t r = 0; r < q[j].size(); ++r) dot += q[i][r] * q[j][r];
      for (std::size_t r = 0; r < q[j].size(); ++r) q[j][r] -= dot * q[i][r];
    }
    double norm = 0.0;
    for (double v : q[j]) norm += v * v;
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (double& v : q[j]) v /= norm;
  }
}

// Cyclic Jacobi eigensolver for a small symmetric matrix, in place.
// Returns eigenvalues; a's columns end up irrelevant, rot holds eigenvectors.
inline std::vector<double> jacobi_eigen(std::vector<std::vector<double>> a,
                                        std::vector<std::vector<double>>& rot) {
  std::size_t n = a.size();
  rot.assign(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) rot[i][i] = 1.0;
  for (int sweep = 0; sweep < 50; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    }
    if (off < 1e-20) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-15) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;
        for (std::size_t i = 0; i < n; ++i) {
          double aip = a[i][p], aiq = a[i][q];
          a[i][p] = c * aip - s * aiq;
          a[i][q] = s * aip + c * aiq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double api = a[p][i], aqi = a[q][i];
          a[p][i] = c * api - s * aqi;
          a[q][i] = s * api + c * aqi;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double rip = rot[i][p], riq = rot[i][q];
          rot[i][p] = c * rip - s * riq;
          rot[i][q] = s * rip + c * riq;
        }
      }
    }
  }
  std::vector<double> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = a[i][i];
  return eig;
}

}  // namespace detail

// Distributional word vectors trained on the corpus itself: context-window
// co-occurrence counts, positive PMI, then a rank-d factorization by
// randomized subspace iteration. Deterministic given the seed.
inline EmbeddingTable train_embeddings(const std::vector<std::string>& texts,
                                       std::size_t dim, std::size_t window = 2,
                                       std::size_t max_vocab = 5000,
                                       std::uint64_t seed = 1) {
  if (texts.empty()) throw InputError("train_embeddings: empty corpus");
  std::map<std::string, std::size_t> counts;
  std::vector<std::vector<std::string>> docs;
  for (const std::string& t : texts) {
    docs.push_back(word_tokens(t));
    for (const std::string& w : docs.back()) counts[w]++;
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_vocab) ranked.resize(max_vocab);
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ranked.size(); ++i) index[ranked[i].first] = i;
  std::size_t v = ranked.size();
  if (v == 0) throw InputError("train_embeddings: no word tokens in corpus");
  std::size_t d = std::min(dim, v);

  std::vector<std::vector<double>> cooc(v, std::vector<double>(v, 0.0));
  for (const auto& doc : docs) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      auto it = index.find(doc[i]);
      if (it == index.end()) continue;
      std::size_t a = it->second;
      for (std::size_t off = 1; off <= window && i + off < doc.size(); ++off) {
        auto jt = index.find(doc[i + off]);
        if (jt == index.end()) continue;
        cooc[a][jt->second] += 1.0;
        cooc[jt->second][a] += 1.0;
      }
    }
  }
  std::vector<double> row(v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) row[i] += cooc[i][j];
    total += row[i];
  }
  if (total == 0.0) total = 1.0;
  std::vector<std::vector<double>> ppmi(v, std::vector<double>(v, 0.0));
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      if (cooc[i][j] <= 0.0 || row[i] <= 0.0 || row[j] <= 0.0) continue;
      double pmi = std::log(cooc[i][j] * total / (row[i] * row[j]));
      if (pmi > 0.0) ppmi[i][j] = pmi;
    }
  }

  // subspace iteration on the symmetric PPMI matrix
  Rng rng(seed);
  std::vector<std::vector<double>> q(d, std::vector<double>(v));
  for (auto& col : q) {
    for (double& x : col) x = rng.normal();
  }
  detail::orthonormalize_columns(q);
  auto mat_apply = [&](const std::vector<double>& x) {
    std::vector<double> y(v, 0.0);
    for (std::size_t i = 0; i < v; ++i) {
      const auto& mi = ppmi[i];
      double s = 0.0;
      for (std::size_t j = 0; j < v; ++j) s += mi[j] * x[j];
      y[i] = s;
    }
    return y;
  };
  for (int iter = 0; iter < 4; ++iter) {
    for (auto& col : q) col = mat_apply(col);
    detail::orthonormalize_columns(q);
  }
  // project: B = Q^T M Q, eigendecompose, embed rows as Q U |L|^(1/2)
  std::vector<std::vector<double>> mq(d);
  for (std::size_t j = 0; j < d; ++j) mq[j] = mat_apply(q[j]);
  std::vector<std::vector<double>> b(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t r = 0; r < v; ++r) s += q[i][r] * mq[j][r];
      b[i][j] = s;
    }
  }
  std::vector<std::vector<double>> u;
  std::vector<double> eig = detail::jacobi_eigen(b, u);

  EmbeddingTable table;
  table.dim = d;
  for (std::size_t w = 0; w < v; ++w) {
    std::vector<double> vec(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += q[i][w] * u[i][j];
      vec[j] = s * std::sqrt(std::abs(eig[j]));
    }
    table.vectors.emplace(ranked[w].first, std::move(vec));
  }
  return table;
}

// ---------------------------------------------------------------------------
// extractive centroid baseline
// ---------------------------------------------------------------------------

struct ExtractiveConfig {
  double redundancy_threshold = 0.95;
  std::size_t length_cap = 100;  // in tokens, measured by the counter below
};

struct BaselineSummary {
  std::string text;
  bool truncated = false;   // single-sentence fallback engaged
  bool empty_output = false;
};

// Token counter abstraction: the pipeline counts subword tokens with the run
// vocabulary; plain word counting works standalone.
using TokenCounter = std::function<std::size_t(const std::string&)>;

inline std::size_t count_words(const std::string& s) { return word_tokens(s).size(); }

// Document frequencies over the corpus, for topic-word TF-IDF.
struct TfidfModel {
  std::size_t docs = 0;
  std::map<std::string, std::size_t> df;

  static TfidfModel fit(const std::vector<std::string>& texts) {
    TfidfModel m;
    m.docs = texts.size();
    for (const std::string& t : texts) {
      std::set<std::string> seen;
      for (const std::string& w : word_tokens(t)) seen.insert(w);
      for (const std::string& w : seen) m.df[w]++;
    }
    return m;
  }

  double idf(const std::string& word) const {
    auto it = df.find(word);
    std::size_t d = it == df.end() ? 1 : std::max<std::size_t>(1, it->second);
    return std::log(double(std::max<std::size_t>(1, docs)) / double(d));
  }
};

namespace detail {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

inline std::vector<double> sum_embeddings(const std::vector<std::string>& words,
                                          const EmbeddingTable& emb) {
  std::vector<double> v(emb.dim, 0.0);
  for (const std::string& w : words) {
    if (const auto* e = emb.find(w)) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += (*e)[i];
    }
  }
  return v;
}

// Longest word-prefix of the sentence that fits under the cap.
inline std::string truncate_to(const std::string& sentence, std::size_t cap,
                               const TokenCounter& counter) {
  auto words = word_tokens(sentence);
  std::string best;
  std::string cur;
  for (const std::string& w : words) {
    std::string next = cur.empty() ? w : cur + " " + w;
    if (counter(next) > cap) break;
    cur = next;
    best = cur;
  }
  return best;
}

}  // namespace detail

// Centroid-based sentence extraction: topic words are those whose bundle
// TF * corpus IDF exceeds the mean over the bundle's distinct words; the
// centroid is the sum of their embeddings. Sentences rank by cosine to the
// centroid, a near-duplicate filter drops anything too close to an already
// selected sentence, and selection stops before the length cap.
inline BaselineSummary extractive_centroid(const std::vector<std::string>& review_texts,
                                           const EmbeddingTable& emb,
                                           const TfidfModel& tfidf,
                                           const ExtractiveConfig& cfg,
                                           const TokenCounter& counter = count_words) {
  if (review_texts.empty()) throw InputError("extractive_centroid: empty bundle");
  struct Sentence {
    std::string text;
    std::vector<double> embedding;
    double score = 0.0;
    std::size_t order = 0;
  };
  std::vector<Sentence> sentences;
  std::map<std::string, double> tf;
  for (const std::string& review : review_texts) {
    for (const std::string& s : split_sentences(review)) {
      Sentence sent;
      sent.text = s;
      sent.order = sentences.size();
      sentences.push_back(std::move(sent));
    }
    for (const std::string& w : word_tokens(review)) tf[w] += 1.0;
  }
  if (sentences.empty()) throw InputError("extractive_centroid: no sentences in bundle");

  double mean_tfidf = 0.0;
  std::map<std::string, double> scores;
  for (const auto& [w, count] : tf) {
    double s = count * tfidf.idf(w);
    scores[w] = s;
    mean_tfidf += s;
  }
  mean_tfidf /= double(scores.size());
  std::vector<std::string> topic_words;
  for (const auto& [w, s] : scores) {
    if (s > mean_tfidf) topic_words.push_back(w);
  }
  std::vector<double> centroid = detail::sum_embeddings(topic_words, emb);

  for (Sentence& s : sentences) {
    s.embedding = detail::sum_embeddings(word_tokens(s.text), emb);
    s.score = detail::cosine(s.embedding, centroid);
  }
  std::stable_sort(sentences.begin(), sentences.end(),
                   [](const Sentence& a, const Sentence& b) {
                     if (a.score != b.score) return a.score > b.score;
                     return a.order < b.order;
                   });

  BaselineSummary out;
  std::vector<const Sentence*> selected;
  std::string text;
  std::size_t used = 0;
  for (const Sentence& s : sentences) {
    bool redundant = false;
    for (const Sentence* prev : selected) {
      if (detail::cosine(s.embedding, prev->embedding) > cfg.redundancy_threshold) {
        redundant = true;
        break;
      }
    }
    if (redundant) continue;
    std::size_t n = counter(s.text);
    if (used + n > cfg.length_cap) break;
    selected.push_back(&s);
    text += (text.empty() ? "" : " ") + s.text;
    used += n;
  }
  if (selected.empty()) {
    out.text = detail::truncate_to(sentences.front().text, cfg.length_cap, counter);
    out.truncated = true;
    out.empty_output = out.text.empty();
    return out;
  }
  out.text = std::move(text);
  return out;
}

// ---------------------------------------------------------------------------
// other baselines
// ---------------------------------------------------------------------------

// First sentence from each review in seeded shuffle order, stopping before
// the cap is exceeded.
inline BaselineSummary multi_lead_1(const std::vector<std::string>& review_texts,
                                    std::size_t max_len, std::uint64_t seed,
                                    const TokenCounter& counter = count_words) {
  std::vector<std::size_t> order(review_texts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng.below(i)]);
  }
  BaselineSummary out;
  std::string text;
  for (std::size_t idx : order) {
    auto sentences = split_sentences(review_texts[idx]);
    if (sentences.empty()) continue;
    std::string candidate = text.empty() ? sentences[0] : text + " " + sentences[0];
    if (counter(candidate) > max_len) break;
    text = std::move(candidate);
  }
  out.text = std::move(text);
  out.empty_output = out.text.empty();
  return out;
}

// WO score of each review against the other k-1; returns (best, worst)
// indices, ties toward the lowest index.
inline std::pair<std::size_t, std::size_t> best_and_worst_review(
    const std::vector<std::string>& review_texts) {
  if (review_texts.size() < 2) {
    throw InputError("best_and_worst_review: need at least 2 reviews");
  }
  std::vector<Words> tokens;
  for (const std::string& t : review_texts) tokens.push_back(word_tokens(t));
  std::size_t best = 0, worst = 0;
  double best_score = -1.0, worst_score = 2.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      if (j != i) total += rouge_1_f(tokens[i], tokens[j]);
    }
    double avg = total / double(tokens.size() - 1);
    if (avg > best_score) {
      best_score = avg;
      best = i;
    }
    if (avg < worst_score) {
      worst_score = avg;
      worst = i;
    }
  }
  return {best, worst};
}

// Nearest-rank percentile (ceil convention) of token lengths among reviews no
// longer than max_len.
inline std::size_t length_cap_from_corpus(const std::vector<Review>& reviews,
                                          double percentile, std::size_t max_len) {
  if (!(percentile > 0.0 && percentile <= 1.0)) {
    throw InputError("length_cap_from_corpus: percentile must be in (0, 1]");
  }
  std::vector<std::size_t> lengths;
  for (const Review& r : reviews) {
    if (!r.tokens.empty() && r.tokens.size() <= max_len) lengths.push_back(r.tokens.size());
  }
  if (lengths.empty()) throw InputError("length_cap_from_corpus: no reviews under max_len");
  std::sort(lengths.begin(), lengths.end());
  std::size_t rank = std::size_t(std::ceil(percentile * double(lengths.size())));
  if (rank < 1) rank = 1;
  if (rank > lengths.size()) rank = lengths.size();
  return lengths[rank - 1];
}

}  // namespace meansum
