#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "meansum/rng.hpp"
#include "meansum/subword.hpp"

namespace meansum {

struct Review {
  std::string review_id;
  std::string entity_id;
  int rating = 0;  // stars, 1..5
  std::string text;
  std::vector<std::size_t> tokens;  // filled after tokenization
};

struct ReviewBundle {
  std::string entity_id;
  std::vector<Review> reviews;  // exactly k, distinct review ids
};

struct CorpusSplits {
  std::vector<std::string> train, valid, test;
};

enum class DatasetKind { yelp, amazon, canonical };

inline DatasetKind dataset_kind_from(const std::string& s) {
  if (s == "yelp") return DatasetKind::yelp;
  if (s == "amazon") return DatasetKind::amazon;
  if (s == "canonical") return DatasetKind::canonical;
  throw InputError("unknown dataset kind: " + s);
}

struct IngestStats {
  std::size_t parsed = 0;
  std::size_t skipped = 0;
};

struct FilterStats {
  std::size_t input_reviews = 0;
  std::size_t dropped_long = 0;
  std::size_t dropped_small_entity = 0;
  std::size_t dropped_popular_entity = 0;
  std::size_t entities_dropped_small = 0;
  std::size_t entities_dropped_popular = 0;
  std::size_t retained_reviews = 0;
  std::size_t retained_entities = 0;
  std::size_t popularity_threshold = 0;
};

// ---------------------------------------------------------------------------
// ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline bool parse_rating(const nlohmann::json& v, int& out) {
  double d;
  if (v.is_number()) {
    d = v.get<double>();
  } else if (v.is_string()) {
    try {
      d = std::stod(v.get<std::string>());
    } catch (...) {
      return false;
    }
  } else {
    return false;
  }
  int r = int(std::lround(d));
  if (std::abs(d - double(r)) > 1e-9 || r < 1 || r > 5) return false;
  out = r;
  return true;
}

}  // namespace detail

// One review per parseable line, preserving file order. Malformed lines and
// lines missing required fields are counted and skipped, never fatal.
inline std::vector<Review> ingest_jsonl(std::istream& in, DatasetKind kind,
                                        IngestStats& stats) {
  std::vector<Review> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      ++stats.skipped;
      continue;
    }
    Review r;
    bool ok = true;
    auto str_field = [&](const char* name, std::string& dst, bool required) {
      if (j.contains(name) && j[name].is_string()) {
        dst = j[name].get<std::string>();
      } else if (required) {
        ok = false;
      }
    };
    switch (kind) {
      case DatasetKind::yelp: {
        str_field("business_id", r.entity_id, true);
        str_field("text", r.text, true);
        str_field("review_id", r.review_id, false);
        if (!j.contains("stars") || !detail::parse_rating(j["stars"], r.rating)) ok = false;
        break;
      }
      case DatasetKind::amazon: {
        str_field("asin", r.entity_id, true);
        str_field("reviewText", r.text, true);
        std::string reviewer;
        str_field("reviewerID", reviewer, false);
        if (!reviewer.empty()) r.review_id = reviewer + ":" + r.entity_id;
        if (!j.contains("overall") || !detail::parse_rating(j["overall"], r.rating)) ok = false;
        break;
      }
      case DatasetKind::canonical: {
        str_field("entity_id", r.entity_id, true);
        str_field("text", r.text, true);
        str_field("review_id", r.review_id, false);
        if (!j.contains("rating") || !detail::parse_rating(j["rating"], r.rating)) ok = false;
        break;
      }
    }
    if (!ok || r.text.empty() || r.entity_id.empty()) {
      ++stats.skipped;
      continue;
    }
    if (r.review_id.empty()) r.review_id = "line" + std::to_string(lineno);
    ++stats.parsed;
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<Review> ingest_jsonl(const std::string& path, DatasetKind kind,
                                        IngestStats& stats) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open input file: " + path);
  return ingest_jsonl(f, kind, stats);
}

inline void write_corpus_jsonl(const std::string& path,
                               const std::vector<Review>& reviews) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write corpus file: " + path);
  for (const Review& r : reviews) {
    nlohmann::ordered_json j;
    j["review_id"] = r.review_id;
    j["entity_id"] = r.entity_id;
    j["rating"] = r.rating;
    j["text"] = r.text;
    f << j.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// filtering
// ---------------------------------------------------------------------------

// Three-stage filter: (1) reviews longer than max_len tokens, (2) entities
// left with fewer than min_entity_reviews, (3) entities whose review count
// exceeds the popularity quantile of per-entity counts, computed after the
// first two stages. The quantile is nearest-rank at floor(p*N) (1-indexed,
// clamped to >= 1); entities sitting exactly on the threshold are retained,
// only strictly-above counts drop. Reviews must already be tokenized.
inline std::vector<Review> filter_corpus(const std::vector<Review>& reviews,
                                         std::size_t max_len,
                                         std::size_t min_entity_reviews,
                                         double popularity_percentile,
                                         FilterStats& stats) {
  if (!(popularity_percentile > 0.0 && popularity_percentile <= 1.0)) {
    throw InputError("filter_corpus: popularity percentile must be in (0, 1]");
  }
  stats.input_reviews = reviews.size();

  std::vector<const Review*> kept;
  std::map<std::string, std::size_t> counts;
  for (const Review& r : reviews) {
    if (r.tokens.size() > max_len) {
      ++stats.dropped_long;
      continue;
    }
    kept.push_back(&r);
    counts[r.entity_id]++;
  }

  std::set<std::string> small;
  for (const auto& [entity, n] : counts) {
    if (n < min_entity_reviews) small.insert(entity);
  }
  stats.entities_dropped_small = small.size();

  std::vector<std::size_t> surviving_counts;
  for (const auto& [entity, n] : counts) {
    if (!small.count(entity)) surviving_counts.push_back(n);
  }
  std::set<std::string> popular;
  if (!surviving_counts.empty()) {
    std::sort(surviving_counts.begin(), surviving_counts.end());
    std::size_t rank = std::size_t(std::floor(popularity_percentile *
                                              double(surviving_counts.size())));
    if (rank < 1) rank = 1;
    std::size_t threshold = surviving_counts[rank - 1];
    stats.popularity_threshold = threshold;
    for (const auto& [entity, n] : counts) {
      if (!small.count(entity) && n > threshold) popular.insert(entity);
    }
  }
  stats.entities_dropped_popular = popular.size();

  std::vector<Review> out;
  std::set<std::string> retained_entities;
  for (const Review* r : kept) {
    if (small.count(r->entity_id)) {
      ++stats.dropped_small_entity;
    } else if (popular.count(r->entity_id)) {
      ++stats.dropped_popular_entity;
    } else {
      out.push_back(*r);
      retained_entities.insert(r->entity_id);
    }
  }
  stats.retained_reviews = out.size();
  stats.retained_entities = retained_entities.size();
  if (out.empty()) throw InputError("filter_corpus: empty corpus after filtering");
  return out;
}

// ---------------------------------------------------------------------------
// splits and bundles
// ---------------------------------------------------------------------------

// Entity-level split. Rounding: floor for valid and test, remainder to train.
inline CorpusSplits split_by_entity(std::vector<std::string> entities,
                                    double train_frac, double valid_frac,
                                    double test_frac, std::uint64_t seed) {
  if (std::abs(train_frac + valid_frac + test_frac - 1.0) > 1e-9) {
    throw InputError("split_by_entity: fractions must sum to 1");
  }
  if (train_frac < 0 || valid_frac < 0 || test_frac < 0) {
    throw InputError("split_by_entity: negative fraction");
  }
  if (entities.size() < 3) {
    throw InputError("split_by_entity: need at least 3 entities, have " +
                     std::to_string(entities.size()));
  }
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  Rng rng(seed);
  for (std::size_t i = entities.size(); i > 1; --i) {
    std::swap(entities[i - 1], entities[rng.below(i)]);
  }
  std::size_t n = entities.size();
  std::size_t n_valid = std::size_t(std::floor(valid_frac * double(n)));
  std::size_t n_test = std::size_t(std::floor(test_frac * double(n)));
  std::size_t n_train = n - n_valid - n_test;
  CorpusSplits s;
  s.train.assign(entities.begin(), entities.begin() + n_train);
  s.valid.assign(entities.begin() + n_train, entities.begin() + n_train + n_valid);
  s.test.assign(entities.begin() + n_train + n_valid, entities.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.valid.begin(), s.valid.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline void save_splits(const std::string& path, const CorpusSplits& s) {
  nlohmann::ordered_json j;
  j["train"] = s.train;
  j["valid"] = s.valid;
  j["test"] = s.test;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write splits file: " + path);
  f << j.dump(2) << "\n";
}

inline CorpusSplits load_splits(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read splits file: " + path);
  nlohmann::json j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw InputError("splits file is not valid JSON: " + path);
  CorpusSplits s;
  s.train = j.at("train").get<std::vector<std::string>>();
  s.valid = j.at("valid").get<std::vector<std::string>>();
  s.test = j.at("test").get<std::vector<std::string>>();
  return s;
}

// Reviews grouped per entity in a deterministic order (sorted by review id).
inline std::map<std::string, std::vector<const Review*>> group_by_entity(
    const std::vector<Review>& reviews) {
  std::map<std::string, std::vector<const Review*>> m;
  for (const Review& r : reviews) m[r.entity_id].push_back(&r);
  for (auto& [_, v] : m) {
    std::sort(v.begin(), v.end(), [](const Review* a, const Review* b) {
      return a->review_id < b->review_id;
    });
  }
  return m;
}

// k distinct reviews drawn uniformly without replacement, ordered by draw.
inline ReviewBundle sample_bundle(
    const std::map<std::string, std::vector<const Review*>>& by_entity,
    const std::string& entity_id, std::size_t k, std::uint64_t seed) {
  auto it = by_entity.find(entity_id);
  std::size_t have = it == by_entity.end() ? 0 : it->second.size();
  if (have < k) {
    throw InputError("sample_bundle: entity " + entity_id + " has " +
                     std::to_string(have) + " reviews, need " + std::to_string(k));
  }
  std::vector<const Review*> pool = it->second;
  Rng rng(seed);
  ReviewBundle b;
  b.entity_id = entity_id;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    b.reviews.push_back(*pool[i]);
  }
  return b;
}

// ---------------------------------------------------------------------------
// synthetic corpus
// ---------------------------------------------------------------------------

// Desk-scale generator. Every review carries surface words from its own
// rating's lexicon, so the star is recoverable from text alone; entities have
// a base rating and per-review ratings may drift one star with probability
// rating_noise, which is what separates mean-latent summaries from copied
// sentences downstream.
struct SyntheticSpec {
  std::size_t vocab_size = 200;  // cap on distinct word types
  std::size_t entities = 60;
  std::size_t reviews_per_entity = 60;
  double rating_noise = 0.3;
  std::map<int, std::vector<std::string>> rating_lexicons;  // defaults if empty
  std::vector<std::string> sentiment_templates;             // defaults if empty
  std::vector<std::string> filler_templates;                // defaults if empty
  std::uint64_t seed = 1;
};

namespace detail {

inline std::map<int, std::vector<std::string>> default_lexicons() {
  return {
      {1, {"terrible", "awful", "horrible", "disgusting", "dreadful", "nasty"}},
      {2, {"bad", "disappointing", "mediocre", "stale", "sloppy", "grim"}},
      {3, {"okay", "average", "passable", "ordinary", "acceptable", "plain"}},
      {4, {"good", "tasty", "pleasant", "friendly", "solid", "welcoming"}},
      {5, {"excellent", "amazing", "wonderful", "superb", "delicious", "perfect"}},
  };
}

inline std::vector<std::string> default_sentiment_templates() {
  return {
      "the {topic} was {lex} and {lex}.",
      "{lex} {topic} and a {lex} room.",
      "our visit felt {lex} because the {topic} seemed {lex}.",
      "honestly the {topic} tasted {lex} and the crew acted {lex}.",
      "we found the {topic} {lex} and the counter {lex}.",
  };
}

inline std::vector<std::string> default_filler_templates() {
  return {
      "i stopped by on {day} with my {companion}.",
      "we waited near the {spot} for a short while.",
      "parking sat behind the {spot} as usual.",
      "my {companion} ordered first on {day}.",
      "the line moved past the {spot} slowly.",
  };
}

inline const std::vector<std::string>& topic_words() {
  static const std::vector<std::string> v = {
      "tacos", "noodles", "coffee", "burgers", "pizza",    "sushi",
      "curry", "salad",   "soup",  "ribs",    "pancakes", "dumplings",
      "bagels", "steak",  "pasta", "falafel", "pho",      "waffles"};
  return v;
}
inline const std::vector<std::string>& day_words() {
  static const std::vector<std::string> v = {"monday",   "tuesday", "wednesday",
                                             "thursday", "friday",  "saturday",
                                             "sunday"};
  return v;
}
inline const std::vector<std::string>& companion_words() {
  static const std::vector<std::string> v = {"brother", "sister",    "roommate",
                                             "cousin",  "neighbor",  "coworker",
                                             "uncle",   "teammates", "friends"};
  return v;
}
inline const std::vector<std::string>& spot_words() {
  static const std::vector<std::string> v = {"fountain", "garage",  "mall",
                                             "station",  "library", "bridge",
                                             "market",   "plaza"};
  return v;
}

inline std::string fill_template(const std::string& tmpl,
                                 const std::string& topic,
                                 const std::vector<std::string>& lexicon,
                                 Rng& rng) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i);
      std::string slot = tmpl.substr(i + 1, close - i - 1);
      if (slot == "topic") {
        out += topic;
      } else if (slot == "lex") {
        out += lexicon[rng.below(lexicon.size())];
      } else if (slot == "day") {
        out += day_words()[rng.below(day_words().size())];
      } else if (slot == "companion") {
        out += companion_words()[rng.below(companion_words().size())];
      } else if (slot == "spot") {
        out += spot_words()[rng.below(spot_words().size())];
      } else {
        throw InputError("synthetic template: unknown slot {" + slot + "}");
      }
      i = close + 1;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

}  // namespace detail

inline void validate(const SyntheticSpec& spec) {
  if (spec.entities == 0 || spec.reviews_per_entity == 0) {
    throw InputError("synthetic spec: entities and reviews_per_entity must be positive");
  }
  if (spec.rating_noise < 0.0 || spec.rating_noise > 1.0) {
    throw InputError("synthetic spec: rating_noise must be in [0, 1]");
  }
  auto lex = spec.rating_lexicons.empty() ? detail::default_lexicons()
                                          : spec.rating_lexicons;
  std::set<std::string> seen;
  std::size_t total = 0;
  for (const auto& [rating, words] : lex) {
    if (rating < 1 || rating > 5 || words.empty()) {
      throw InputError("synthetic spec: lexicons must cover ratings 1..5");
    }
    for (const std::string& w : words) {
      ++total;
      if (!seen.insert(w).second) {
        throw InputError("synthetic spec: rating lexicons must be disjoint, repeated: " + w);
      }
    }
  }
  if (lex.size() != 5) throw InputError("synthetic spec: need lexicons for all 5 ratings");
  if (spec.vocab_size < total + 40) {
    throw InputError("synthetic spec: vocab_size too small for lexicons plus scaffolding");
  }
}

inline std::vector<Review> generate_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  auto lexicons = spec.rating_lexicons.empty() ? detail::default_lexicons()
                                               : spec.rating_lexicons;
  auto sent_templates = spec.sentiment_templates.empty()
                            ? detail::default_sentiment_templates()
                            : spec.sentiment_templates;
  auto fill_templates = spec.filler_templates.empty()
                            ? detail::default_filler_templates()
                            : spec.filler_templates;
  std::vector<Review> out;
  out.reserve(spec.entities * spec.reviews_per_entity);
  Rng base(spec.seed);
  for (std::size_t e = 0; e < spec.entities; ++e) {
    char id[16];
    std::snprintf(id, sizeof id, "e%04zu", e);
    int entity_rating = int(e % 5) + 1;
    Rng erng = base.fork(e);
    const std::string topic =
        detail::topic_words()[erng.below(detail::topic_words().size())];
    for (std::size_t r = 0; r < spec.reviews_per_entity; ++r) {
      Rng rng = erng.fork(r + 1);
      int rating = entity_rating;
      if (rng.uniform() < spec.rating_noise) {
        int shift = rng.uniform() < 0.5 ? -1 : 1;
        rating += shift;
        if (rating < 1) rating = 2;
        if (rating > 5) rating = 4;
      }
      const auto& lex = lexicons.at(rating);
      std::string sentiment = detail::fill_template(
          sent_templates[rng.below(sent_templates.size())], topic, lex, rng);
      std::string filler = detail::fill_template(
          fill_templates[rng.below(fill_templates.size())], topic, lex, rng);
      std::string text = rng.uniform() < 0.5 ? sentiment + " " + filler
                                             : filler + " " + sentiment;
      if (rng.uniform() < 0.35) {
        text += " " + detail::fill_template(
                          sent_templates[rng.below(sent_templates.size())],
                          topic, lex, rng);
      }
      Review rv;
      rv.review_id = std::string(id) + "_r" + std::to_string(r);
      rv.entity_id = id;
      rv.rating = rating;
      rv.text = std::move(text);
      out.push_back(std::move(rv));
    }
  }
  return out;
}

}  // namespace meansum
