#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "meansum/baselines.hpp"
#include "meansum/metrics.hpp"
#include "meansum/model.hpp"
#include "meansum/training.hpp"

namespace meansum {

struct BundleReport {
  std::string entity_id;
  std::vector<std::string> review_ids;
  std::string summary;
  int predicted_star = 0;
  int target_star = 0;  // rounded mean input rating
  double mean_rating = 0.0;
  double wo = 0.0;
  std::optional<double> nll;
  std::optional<double> novelty2, novelty3, novelty4;
  std::optional<double> rouge1, rouge2, rougel;
};

// Aggregate fields are plain arithmetic means of the per-bundle values
// (over the bundles where the value is defined), which keeps the
// aggregate-equals-mean invariant checkable to machine precision.
struct EvalReport {
  std::vector<BundleReport> bundles;
  bool has_references = false;
  double sentiment_accuracy = 0.0;
  double mean_wo = 0.0;
  std::optional<double> mean_nll;
  std::optional<double> mean_novelty2, mean_novelty3, mean_novelty4;
  std::optional<double> mean_rouge1, mean_rouge2, mean_rougel;

  void finalize() {
    if (bundles.empty()) throw InputError("EvalReport: no bundles evaluated");
    auto mean_of = [&](auto field) -> std::optional<double> {
      double total = 0.0;
      std::size_t n = 0;
      for (const BundleReport& b : bundles) {
        if (auto v = field(b)) {
          total += *v;
          ++n;
        }
      }
      if (n == 0) return std::nullopt;
      return total / double(n);
    };
    double hits = 0.0;
    double wo = 0.0;
    for (const BundleReport& b : bundles) {
      hits += b.predicted_star == b.target_star ? 1.0 : 0.0;
      wo += b.wo;
    }
    sentiment_accuracy = hits / double(bundles.size());
    mean_wo = wo / double(bundles.size());
    mean_nll = mean_of([](const BundleReport& b) { return b.nll; });
    mean_novelty2 = mean_of([](const BundleReport& b) { return b.novelty2; });
    mean_novelty3 = mean_of([](const BundleReport& b) { return b.novelty3; });
    mean_novelty4 = mean_of([](const BundleReport& b) { return b.novelty4; });
    mean_rouge1 = mean_of([](const BundleReport& b) { return b.rouge1; });
    mean_rouge2 = mean_of([](const BundleReport& b) { return b.rouge2; });
    mean_rougel = mean_of([](const BundleReport& b) { return b.rougel; });
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    auto put = [](nlohmann::ordered_json& o, const char* key,
                  const std::optional<double>& v) {
      if (v) o[key] = *v;
    };
    nlohmann::ordered_json agg;
    agg["bundles"] = bundles.size();
    agg["sentiment_accuracy"] = sentiment_accuracy;
    agg["word_overlap"] = mean_wo;
    put(agg, "nll", mean_nll);
    put(agg, "novelty2", mean_novelty2);
    put(agg, "novelty3", mean_novelty3);
    put(agg, "novelty4", mean_novelty4);
    put(agg, "rouge1", mean_rouge1);
    put(agg, "rouge2", mean_rouge2);
    put(agg, "rougel", mean_rougel);
    j["aggregate"] = std::move(agg);

    // Table-style presentation: x100 with 2 decimals
    nlohmann::ordered_json table;
    char buf[32];
    auto x100 = [&](double v) {
      std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
      return std::string(buf);
    };
    table["sentiment_accuracy"] = x100(sentiment_accuracy);
    table["word_overlap"] = x100(mean_wo);
    if (mean_nll) {
      std::snprintf(buf, sizeof buf, "%.4f", *mean_nll);
      table["nll"] = std::string(buf);  // NLL reads in nats, not x100
    }
    if (mean_novelty2) table["novelty2"] = x100(*mean_novelty2);
    if (mean_novelty3) table["novelty3"] = x100(*mean_novelty3);
    if (mean_novelty4) table["novelty4"] = x100(*mean_novelty4);
    if (mean_rouge1) table["rouge1"] = x100(*mean_rouge1);
    if (mean_rouge2) table["rouge2"] = x100(*mean_rouge2);
    if (mean_rougel) table["rougel"] = x100(*mean_rougel);
    j["table_x100"] = std::move(table);

    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const BundleReport& b : bundles) {
      nlohmann::ordered_json r;
      r["entity_id"] = b.entity_id;
      r["review_ids"] = b.review_ids;
      r["summary"] = b.summary;
      r["predicted_star"] = b.predicted_star;
      r["target_star"] = b.target_star;
      r["mean_rating"] = b.mean_rating;
      r["wo"] = b.wo;
      put(r, "nll", b.nll);
      put(r, "novelty2", b.novelty2);
      put(r, "novelty3", b.novelty3);
      put(r, "novelty4", b.novelty4);
      put(r, "rouge1", b.rouge1);
      put(r, "rouge2", b.rouge2);
      put(r, "rougel", b.rougel);
      rows.push_back(std::move(r));
    }
    j["bundles"] = std::move(rows);
    return j;
  }

  std::string to_csv() const {
    std::string out =
        "entity_id,predicted_star,target_star,wo,nll,novelty2,novelty3,novelty4";
    if (has_references) out += ",rouge1,rouge2,rougel";
    out += "\n";
    char buf[64];
    auto cell = [&](const std::optional<double>& v) {
      if (!v) return std::string("");
      std::snprintf(buf, sizeof buf, "%.6f", *v);
      return std::string(buf);
    };
    for (const BundleReport& b : bundles) {
      std::snprintf(buf, sizeof buf, ",%d,%d,%.6f,", b.predicted_star, b.target_star, b.wo);
      out += b.entity_id + buf + cell(b.nll) + "," + cell(b.novelty2) + "," +
             cell(b.novelty3) + "," + cell(b.novelty4);
      if (has_references) {
        out += "," + cell(b.rouge1) + "," + cell(b.rouge2) + "," + cell(b.rougel);
      }
      out += "\n";
    }
    return out;
  }
};

// Scores one summary text against its bundle. The classifier predicts the
// star from the summary's subword tokens; surface metrics run on word tokens.
inline BundleReport score_bundle(const EvalBundle& bundle, const std::string& summary,
                                 RatingClassifier& clf, const Vocabulary& vocab,
                                 LanguageModel* lm,
                                 const std::string* reference_text) {
  BundleReport r;
  r.entity_id = bundle.entity_id;
  r.review_ids = bundle.review_ids;
  r.summary = summary;
  double total = 0.0;
  for (int star : bundle.ratings) total += star;
  r.mean_rating = total / double(bundle.ratings.size());
  r.target_star = round_mean_rating(bundle.ratings);

  std::vector<std::size_t> tokens = vocab.encode(summary);
  r.predicted_star = predict_star(clf, tokens);

  Words summary_words = word_tokens(summary);
  std::vector<Words> review_words;
  for (const std::string& t : bundle.texts) review_words.push_back(word_tokens(t));
  r.wo = word_overlap(summary_words, review_words);
  r.novelty2 = ngram_novelty(summary_words, review_words, 2);
  r.novelty3 = ngram_novelty(summary_words, review_words, 3);
  r.novelty4 = ngram_novelty(summary_words, review_words, 4);
  if (lm && !tokens.empty()) r.nll = summary_nll(*lm, tokens);
  if (reference_text) {
    Words ref = word_tokens(*reference_text);
    r.rouge1 = rouge_1_f(summary_words, ref);
    r.rouge2 = rouge_2_f(summary_words, ref);
    r.rougel = rouge_l_f(summary_words, ref);
  }
  return r;
}

// References file: JSON Lines of {entity_id, summary_text}.
inline std::map<std::string, std::string> load_references(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read references file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("entity_id") || !j.contains("summary_text")) {
      throw InputError("references file: malformed line");
    }
    out[j["entity_id"].get<std::string>()] = j["summary_text"].get<std::string>();
  }
  return out;
}

}  // namespace meansum
