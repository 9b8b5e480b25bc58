#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "meansum/baselines.hpp"
#include "meansum/config.hpp"
#include "meansum/report.hpp"

namespace meansum {
namespace cli {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// corpus directory layout: reviews.jsonl, vocab.txt, splits.json, stats.json
// run directory layout: config.resolved, checkpoints/, logs/, reports/
// ---------------------------------------------------------------------------

struct CorpusDir {
  std::vector<Review> reviews;  // tokenized
  CorpusSplits splits;
  Vocabulary vocab;
};

inline CorpusDir load_corpus_dir(const std::string& dir) {
  CorpusDir c;
  c.vocab = Vocabulary::load((fs::path(dir) / "vocab.txt").string());
  IngestStats stats;
  c.reviews = ingest_jsonl((fs::path(dir) / "reviews.jsonl").string(),
                           DatasetKind::canonical, stats);
  if (c.reviews.empty()) throw InputError("corpus directory has no reviews: " + dir);
  c.splits = load_splits((fs::path(dir) / "splits.json").string());
  tokenize_corpus(c.reviews, c.vocab);
  return c;
}

// Relative output paths resolve under $MEANSUM_RUN_ROOT when it is set.
inline fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("MEANSUM_RUN_ROOT")) {
    return fs::path(root) / p;
  }
  return p;
}

// Creates the run directory skeleton and writes the resolved config before
// any compute starts, so a crashed run is still diagnosable.
inline fs::path prepare_run_dir(const std::string& out, const RunConfig& cfg) {
  fs::path dir = resolve_out(out);
  fs::create_directories(dir);
  fs::create_directories(dir / "checkpoints");
  fs::create_directories(dir / "logs");
  fs::create_directories(dir / "reports");
  std::ofstream f(dir / "config.resolved", std::ios::binary);
  if (!f) throw InputError("cannot write config.resolved in " + dir.string());
  f << cfg.resolved_text();
  return dir;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
}

inline void append_log(const fs::path& run_dir, const std::string& line) {
  std::ofstream f(run_dir / "logs" / "run.log", std::ios::binary | std::ios::app);
  f << line << "\n";
}

// ---------------------------------------------------------------------------
// corpus building (synth + ingest share the tail of the pipeline)
// ---------------------------------------------------------------------------

inline void build_corpus_dir(const RunConfig& cfg, std::vector<Review> raw,
                             const IngestStats& ingest_stats, const std::string& out) {
  fs::path dir = resolve_out(out);
  fs::create_directories(dir);
  write_text(dir / "config.resolved", cfg.resolved_text());

  std::vector<std::string> texts;
  for (const Review& r : raw) texts.push_back(r.text);
  Vocabulary vocab = Vocabulary::train(texts, cfg.get_size("vocab_size"));
  tokenize_corpus(raw, vocab);

  FilterStats fstats;
  std::vector<Review> kept =
      filter_corpus(raw, cfg.get_size("max_len"), cfg.get_size("min_entity_reviews"),
                    cfg.get_double("popularity_percentile"), fstats);

  std::set<std::string> entity_set;
  for (const Review& r : kept) entity_set.insert(r.entity_id);
  CorpusSplits splits = split_by_entity(
      std::vector<std::string>(entity_set.begin(), entity_set.end()),
      cfg.get_double("split_train"), cfg.get_double("split_valid"),
      cfg.get_double("split_test"), std::uint64_t(cfg.get_int("seed")));

  write_corpus_jsonl((dir / "reviews.jsonl").string(), kept);
  vocab.save((dir / "vocab.txt").string());
  save_splits((dir / "splits.json").string(), splits);

  nlohmann::ordered_json stats;
  stats["ingest"] = {{"parsed", ingest_stats.parsed}, {"skipped", ingest_stats.skipped}};
  stats["filter"] = {{"input_reviews", fstats.input_reviews},
                     {"dropped_long", fstats.dropped_long},
                     {"dropped_small_entity", fstats.dropped_small_entity},
                     {"dropped_popular_entity", fstats.dropped_popular_entity},
                     {"entities_dropped_small", fstats.entities_dropped_small},
                     {"entities_dropped_popular", fstats.entities_dropped_popular},
                     {"popularity_threshold", fstats.popularity_threshold},
                     {"retained_reviews", fstats.retained_reviews},
                     {"retained_entities", fstats.retained_entities}};
  stats["splits"] = {{"train", splits.train.size()},
                     {"valid", splits.valid.size()},
                     {"test", splits.test.size()}};
  stats["vocab"] = {{"pieces", vocab.size()}, {"hash", hash_hex(vocab.hash())}};
  write_text(dir / "stats.json", stats.dump(2) + "\n");
}

inline int cmd_synth(const RunConfig& cfg, const std::string& out) {
  SyntheticSpec spec = cfg.synthetic_spec();
  std::vector<Review> raw = generate_synthetic(spec);
  IngestStats stats;
  stats.parsed = raw.size();
  build_corpus_dir(cfg, std::move(raw), stats, out);
  return 0;
}

inline int cmd_ingest(const RunConfig& cfg, const std::string& input,
                      const std::string& kind, const std::string& out) {
  IngestStats stats;
  std::vector<Review> raw = ingest_jsonl(input, dataset_kind_from(kind), stats);
  build_corpus_dir(cfg, std::move(raw), stats, out);
  return 0;
}

// ---------------------------------------------------------------------------
// training commands
// ---------------------------------------------------------------------------

inline int cmd_train_lm(const RunConfig& cfg, const std::string& corpus_dir,
                        const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  TrainConfig tc = cfg.train_config();
  TrainedLm r = train_language_model(tc, corpus.reviews, corpus.splits, corpus.vocab);
  save_lm((dir / "checkpoints" / "lm").string(), r.lm, r.steps);
  r.log.save_csv((dir / "logs" / "metrics.csv").string());
  if (r.aborted) {
    append_log(dir, "aborted: non-finite loss at step " + std::to_string(r.steps) +
                        "; checkpoint holds the last good weights");
    std::cerr << "train-lm: non-finite loss at step " << r.steps
              << "; wrote last good checkpoint\n";
    return 1;
  }
  append_log(dir, "train-lm finished at step " + std::to_string(r.steps));
  return 0;
}

inline int cmd_train_clf(const RunConfig& cfg, const std::string& corpus_dir,
                         const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  TrainConfig tc = cfg.train_config();
  TrainedClassifier r = train_classifier(tc, corpus.reviews, corpus.splits, corpus.vocab);
  save_classifier((dir / "checkpoints" / "clf").string(), r.clf, r.steps);
  r.log.save_csv((dir / "logs" / "metrics.csv").string());
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", r.valid_accuracy);
  write_text(dir / "reports" / "clf_validation.json",
             std::string("{\n  \"valid_accuracy\": ") + buf + "\n}\n");
  if (r.aborted) {
    append_log(dir, "aborted: non-finite loss at step " + std::to_string(r.steps));
    return 1;
  }
  append_log(dir, "train-clf finished; validation accuracy " + std::string(buf));
  return 0;
}

inline int cmd_train_sum(const RunConfig& cfg, const std::string& corpus_dir,
                         const std::string& lm_stem, const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  TrainConfig tc = cfg.train_config();
  LanguageModel lm;
  LanguageModel* lm_ptr = nullptr;
  if (!lm_stem.empty()) {
    lm = load_lm(lm_stem);
    require_vocab_match(lm.vocab_hash, corpus.vocab.hash(), "train-sum");
    lm_ptr = &lm;
  } else if (tc.variant.use_pretrained_lm) {
    throw InputError("train-sum: variant '" + tc.variant.name() +
                     "' needs --lm (a pretrained language model checkpoint)");
  }
  TrainedSummarizer r = train_meansum(tc, corpus.reviews, corpus.splits,
                                      corpus.vocab, lm_ptr);
  save_meansum((dir / "checkpoints" / "sum").string(), r.model);
  r.log.save_csv((dir / "logs" / "metrics.csv").string());
  if (r.aborted) {
    append_log(dir, "aborted: non-finite loss at step " + std::to_string(r.steps));
    std::cerr << "train-sum: non-finite loss at step " << r.steps
              << "; wrote last good checkpoint\n";
    return 1;
  }
  char buf[96];
  std::snprintf(buf, sizeof buf, "collapse_score=%.4f final_nll=%.4f", r.collapse,
                r.final_nll);
  append_log(dir, "train-sum finished at step " + std::to_string(r.steps) + " " + buf);
  return 0;
}

// ---------------------------------------------------------------------------
// summarize
// ---------------------------------------------------------------------------

struct SummarizeInputs {
  std::string corpus_dir;
  std::string checkpoint;  // meansum model stem (generator "model")
  std::string lm;          // LM stem (generator "untrained")
  std::string clf;         // classifier stem, always required
  std::string baseline;    // "", extractive, lead, best, worst, untrained
  std::string out_file;
};

inline std::vector<std::string> summaries_for_baseline(
    const RunConfig& cfg, const CorpusDir& corpus,
    const std::vector<EvalBundle>& bundles, const std::string& baseline,
    MeanSumModel* model) {
  std::vector<std::string> out;
  std::size_t max_len = cfg.get_size("max_len");
  if (baseline.empty() || baseline == "untrained") {
    for (const EvalBundle& b : bundles) {
      std::vector<std::size_t> ids = summarize_greedy(*model, b.tokens, max_len);
      out.push_back(corpus.vocab.decode(ids));
    }
    return out;
  }
  if (baseline == "extractive") {
    std::vector<std::string> texts;
    for (const Review& r : corpus.reviews) texts.push_back(r.text);
    EmbeddingTable emb = train_embeddings(texts, cfg.get_size("embed_dim"),
                                          cfg.get_size("embed_window"), 5000,
                                          std::uint64_t(cfg.get_int("seed")));
    TfidfModel tfidf = TfidfModel::fit(texts);
    ExtractiveConfig ecfg;
    ecfg.redundancy_threshold = cfg.get_double("redundancy_threshold");
    ecfg.length_cap = length_cap_from_corpus(
        corpus.reviews, cfg.get_double("length_cap_percentile"), max_len);
    TokenCounter counter = [&corpus](const std::string& s) {
      return corpus.vocab.encode(s).size();
    };
    for (const EvalBundle& b : bundles) {
      out.push_back(extractive_centroid(b.texts, emb, tfidf, ecfg, counter).text);
    }
    return out;
  }
  if (baseline == "lead") {
    TokenCounter counter = [&corpus](const std::string& s) {
      return corpus.vocab.encode(s).size();
    };
    std::uint64_t seed = std::uint64_t(cfg.get_int("seed"));
    for (std::size_t i = 0; i < bundles.size(); ++i) {
      out.push_back(multi_lead_1(bundles[i].texts, max_len, seed + i, counter).text);
    }
    return out;
  }
  if (baseline == "best" || baseline == "worst") {
    for (const EvalBundle& b : bundles) {
      auto [best, worst] = best_and_worst_review(b.texts);
      out.push_back(b.texts[baseline == "best" ? best : worst]);
    }
    return out;
  }
  throw InputError("unknown baseline: " + baseline);
}

inline int cmd_summarize(const RunConfig& cfg, const SummarizeInputs& in) {
  CorpusDir corpus = load_corpus_dir(in.corpus_dir);
  auto by_entity = group_by_entity(corpus.reviews);
  const std::string& split_name = cfg.raw("eval_split");
  const std::vector<std::string>& split =
      split_name == "train" ? corpus.splits.train
      : split_name == "valid" ? corpus.splits.valid
                              : corpus.splits.test;
  std::vector<EvalBundle> bundles =
      sample_eval_bundles(by_entity, split, cfg.get_size("k"),
                          cfg.get_size("eval_bundles"),
                          std::uint64_t(cfg.get_int("seed")) ^ 0xb0d1e5);

  RatingClassifier clf = load_classifier(in.clf);
  require_vocab_match(clf.vocab_hash, corpus.vocab.hash(), "summarize (classifier)");

  MeanSumModel model;
  MeanSumModel* model_ptr = nullptr;
  if (in.baseline.empty()) {
    if (in.checkpoint.empty()) throw InputError("summarize: --checkpoint required");
    model = load_meansum(in.checkpoint);
    require_vocab_match(model.vocab_hash, corpus.vocab.hash(), "summarize (model)");
    model_ptr = &model;
  } else if (in.baseline == "untrained") {
    if (in.lm.empty()) throw InputError("summarize: --baseline untrained requires --lm");
    LanguageModel lm = load_lm(in.lm);
    require_vocab_match(lm.vocab_hash, corpus.vocab.hash(), "summarize (lm)");
    Rng rng(std::uint64_t(cfg.get_int("seed")));
    model = MeanSumModel::init(lm.vocab, lm.hidden, lm.embed, lm.vocab_hash,
                               VariantSpec::full(), rng);
    model.init_from_lm(lm);
    model_ptr = &model;
  }

  std::vector<std::string> texts =
      summaries_for_baseline(cfg, corpus, bundles, in.baseline, model_ptr);

  fs::path out_path = resolve_out(in.out_file);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  std::ofstream f(out_path, std::ios::binary);
  if (!f) throw InputError("cannot write summaries file: " + out_path.string());
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    nlohmann::ordered_json j;
    j["entity_id"] = bundles[i].entity_id;
    j["review_ids"] = bundles[i].review_ids;
    j["summary"] = texts[i];
    j["predicted_star"] = predict_star(clf, corpus.vocab.encode(texts[i]));
    f << j.dump() << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

struct SummaryRecord {
  std::string entity_id;
  std::vector<std::string> review_ids;
  std::string summary;
};

inline std::vector<SummaryRecord> load_summaries(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read summaries file: " + path);
  std::vector<SummaryRecord> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("entity_id") || !j.contains("review_ids") ||
        !j.contains("summary")) {
      throw InputError("summaries file: malformed line");
    }
    SummaryRecord r;
    r.entity_id = j["entity_id"].get<std::string>();
    r.review_ids = j["review_ids"].get<std::vector<std::string>>();
    r.summary = j["summary"].get<std::string>();
    out.push_back(std::move(r));
  }
  if (out.empty()) throw InputError("summaries file is empty: " + path);
  return out;
}

inline EvalReport build_report(const std::vector<SummaryRecord>& records,
                               const CorpusDir& corpus, RatingClassifier& clf,
                               LanguageModel* lm,
                               const std::map<std::string, std::string>* references) {
  std::map<std::string, const Review*> by_id;
  for (const Review& r : corpus.reviews) by_id[r.review_id] = &r;

  std::vector<std::string> unmatched;
  EvalReport report;
  report.has_references = references != nullptr;
  for (const SummaryRecord& rec : records) {
    EvalBundle b;
    b.entity_id = rec.entity_id;
    bool ok = true;
    for (const std::string& id : rec.review_ids) {
      auto it = by_id.find(id);
      if (it == by_id.end() || it->second->entity_id != rec.entity_id) {
        ok = false;
        break;
      }
      b.review_ids.push_back(id);
      b.tokens.push_back(it->second->tokens);
      b.ratings.push_back(it->second->rating);
      b.texts.push_back(it->second->text);
    }
    const std::string* ref = nullptr;
    if (references) {
      auto it = references->find(rec.entity_id);
      if (it == references->end()) ok = false;
      else ref = &it->second;
    }
    if (!ok) {
      unmatched.push_back(rec.entity_id);
      continue;
    }
    report.bundles.push_back(
        score_bundle(b, rec.summary, clf, corpus.vocab, lm, ref));
  }
  if (!unmatched.empty()) {
    std::string msg = "evaluate: unmatched entities:";
    for (const std::string& e : unmatched) msg += " " + e;
    throw InputError(msg);
  }
  report.finalize();
  return report;
}

inline int cmd_evaluate(const RunConfig& cfg, const std::string& summaries_file,
                        const std::string& corpus_dir, const std::string& clf_stem,
                        const std::string& lm_stem, const std::string& references_file,
                        const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  RatingClassifier clf = load_classifier(clf_stem);
  require_vocab_match(clf.vocab_hash, corpus.vocab.hash(), "evaluate (classifier)");
  LanguageModel lm;
  LanguageModel* lm_ptr = nullptr;
  if (!lm_stem.empty()) {
    lm = load_lm(lm_stem);
    require_vocab_match(lm.vocab_hash, corpus.vocab.hash(), "evaluate (lm)");
    lm_ptr = &lm;
  }
  std::map<std::string, std::string> refs;
  const std::map<std::string, std::string>* refs_ptr = nullptr;
  if (!references_file.empty()) {
    refs = load_references(references_file);
    refs_ptr = &refs;
  }
  std::vector<SummaryRecord> records = load_summaries(summaries_file);
  EvalReport report = build_report(records, corpus, clf, lm_ptr, refs_ptr);
  write_text(dir / "reports" / "report.json", report.to_json().dump(2) + "\n");
  write_text(dir / "reports" / "report.csv", report.to_csv());
  return 0;
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

inline int cmd_ablate(const RunConfig& cfg, const std::string& corpus_dir,
                      const std::string& lm_stem, const std::string& clf_stem,
                      const std::string& variants_arg, const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  LanguageModel lm = load_lm(lm_stem);
  require_vocab_match(lm.vocab_hash, corpus.vocab.hash(), "ablate (lm)");
  RatingClassifier clf = load_classifier(clf_stem);
  require_vocab_match(clf.vocab_hash, corpus.vocab.hash(), "ablate (classifier)");

  std::vector<std::string> variants;
  if (variants_arg.empty()) {
    variants.push_back("full");
    for (const std::string& v : VariantSpec::ablation_names()) variants.push_back(v);
  } else {
    std::stringstream ss(variants_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) variants.push_back(item);
    }
  }

  auto by_entity = group_by_entity(corpus.reviews);
  TrainConfig base = cfg.train_config();
  std::vector<EvalBundle> eval_bundles = sample_eval_bundles(
      by_entity, corpus.splits.valid.empty() ? corpus.splits.train : corpus.splits.valid,
      base.k, cfg.get_size("eval_bundles"), base.seed ^ 0xab1a7e);

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::string csv =
      "variant,l_rec,l_sim,l_model,nll,sentiment_acc,wo,collapse,degenerate\n";
  for (const std::string& name : variants) {
    TrainConfig tc = base;
    tc.variant = VariantSpec::named(name);
    TrainedSummarizer r =
        train_meansum(tc, corpus.reviews, corpus.splits, corpus.vocab, &lm);
    save_meansum((dir / "checkpoints" / ("sum_" + name)).string(), r.model);
    r.log.save_csv((dir / "logs" / ("metrics_" + name + ".csv")).string());

    double acc = 0.0, wo = 0.0;
    std::size_t max_len = cfg.get_size("max_len");
    for (const EvalBundle& b : eval_bundles) {
      std::vector<std::size_t> ids = summarize_greedy(r.model, b.tokens, max_len);
      std::string text = corpus.vocab.decode(ids);
      BundleReport br = score_bundle(b, text, clf, corpus.vocab, nullptr, nullptr);
      acc += br.predicted_star == br.target_star ? 1.0 : 0.0;
      wo += br.wo;
    }
    acc /= double(eval_bundles.size());
    wo /= double(eval_bundles.size());
    bool degenerate = r.collapse > 0.99;
    const MetricsRow& last = r.log.rows().back();

    nlohmann::ordered_json row;
    row["variant"] = name;
    row["l_rec"] = last.l_rec;
    row["l_sim"] = last.l_sim;
    row["l_model"] = last.l_model;
    if (last.has_nll) row["nll"] = last.nll;
    row["sentiment_acc"] = acc;
    row["wo"] = wo;
    row["collapse"] = r.collapse;
    row["degenerate"] = degenerate;
    rows.push_back(std::move(row));

    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%s,%.6f,%.6f,%.6f,%d",
                  name.c_str(), last.l_rec, last.l_sim, last.l_model,
                  last.has_nll ? [&] {
                    static char nbuf[32];
                    std::snprintf(nbuf, sizeof nbuf, "%.6f", last.nll);
                    return nbuf;
                  }() : "nan",
                  acc, wo, r.collapse, degenerate ? 1 : 0);
    csv += std::string(buf) + "\n";
  }
  nlohmann::ordered_json j;
  j["variants"] = std::move(rows);
  write_text(dir / "reports" / "ablation.json", j.dump(2) + "\n");
  write_text(dir / "reports" / "ablation.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------
// vary-k
// ---------------------------------------------------------------------------

inline int cmd_vary_k(const RunConfig& cfg, const std::string& corpus_dir,
                      const std::string& lm_stem, const std::string& clf_stem,
                      bool include_varying, const std::string& out) {
  fs::path dir = prepare_run_dir(out, cfg);
  CorpusDir corpus = load_corpus_dir(corpus_dir);
  LanguageModel lm = load_lm(lm_stem);
  require_vocab_match(lm.vocab_hash, corpus.vocab.hash(), "vary-k (lm)");
  RatingClassifier clf = load_classifier(clf_stem);
  require_vocab_match(clf.vocab_hash, corpus.vocab.hash(), "vary-k (classifier)");

  std::vector<std::size_t> k_list = cfg.get_size_list("k_list");
  if (k_list.empty()) throw InputError("vary-k: k_list is empty");
  auto by_entity = group_by_entity(corpus.reviews);
  TrainConfig base = cfg.train_config();
  std::size_t max_len = cfg.get_size("max_len");

  struct Arm {
    std::string label;
    std::size_t eval_k;
    TrainConfig tc;
  };
  std::vector<Arm> arms;
  for (std::size_t k : k_list) {
    Arm a{"k" + std::to_string(k), k, base};
    a.tc.k = k;
    a.tc.k_list.clear();
    arms.push_back(std::move(a));
  }
  if (include_varying) {
    Arm a{"varying", *std::max_element(k_list.begin(), k_list.end()), base};
    a.tc.k = a.eval_k;
    a.tc.k_list = k_list;
    arms.push_back(std::move(a));
  }

  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  std::string csv = "model,k_eval,sentiment_acc,wo,nll\n";
  for (const Arm& arm : arms) {
    TrainedSummarizer r =
        train_meansum(arm.tc, corpus.reviews, corpus.splits, corpus.vocab, &lm);
    save_meansum((dir / "checkpoints" / ("sum_" + arm.label)).string(), r.model);
    r.log.save_csv((dir / "logs" / ("metrics_" + arm.label + ".csv")).string());

    std::vector<EvalBundle> bundles = sample_eval_bundles(
        by_entity, corpus.splits.test.empty() ? corpus.splits.train : corpus.splits.test,
        arm.eval_k, cfg.get_size("eval_bundles"), base.seed ^ 0x7a6b);
    double acc = 0.0, wo = 0.0, nll = 0.0;
    std::size_t nll_n = 0;
    for (const EvalBundle& b : bundles) {
      std::vector<std::size_t> ids = summarize_greedy(r.model, b.tokens, max_len);
      std::string text = corpus.vocab.decode(ids);
      BundleReport br = score_bundle(b, text, clf, corpus.vocab, &lm, nullptr);
      acc += br.predicted_star == br.target_star ? 1.0 : 0.0;
      wo += br.wo;
      if (br.nll) {
        nll += *br.nll;
        ++nll_n;
      }
    }
    acc /= double(bundles.size());
    wo /= double(bundles.size());
    double mean_nll = nll_n ? nll / double(nll_n) : std::nan("");

    nlohmann::ordered_json row;
    row["model"] = arm.label;
    row["k_eval"] = arm.eval_k;
    row["sentiment_acc"] = acc;
    row["wo"] = wo;
    if (nll_n) row["nll"] = mean_nll;
    rows.push_back(std::move(row));
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,", arm.label.c_str(), arm.eval_k,
                  acc, wo);
    csv += buf;
    if (nll_n) {
      std::snprintf(buf, sizeof buf, "%.6f", mean_nll);
      csv += buf;
    } else {
      csv += "nan";
    }
    csv += "\n";
  }
  nlohmann::ordered_json j;
  j["k_list"] = k_list;
  j["rows"] = std::move(rows);
  write_text(dir / "reports" / "vary_k.json", j.dump(2) + "\n");
  write_text(dir / "reports" / "vary_k.csv", csv);
  return 0;
}

// ---------------------------------------------------------------------------
// argument parsing
// ---------------------------------------------------------------------------

inline int run_cli(int argc, const char* const* argv) {
  CLI::App app{"unsupervised multi-document review summarization pipeline"};
  app.require_subcommand(1);

  // Each subcommand gets its own config accumulation: file first, then flags.
  // CLI11 callbacks fire in parse order, so we stage the file path and replay
  // flag overrides afterwards.
  struct Pending {
    std::shared_ptr<RunConfig> cfg = std::make_shared<RunConfig>();
    std::shared_ptr<std::string> config_file = std::make_shared<std::string>();
    std::shared_ptr<std::vector<std::pair<std::string, std::string>>> overrides =
        std::make_shared<std::vector<std::pair<std::string, std::string>>>();
  };
  auto make_config = [](CLI::App* cmd) {
    Pending p;
    cmd->add_option_function<std::string>(
        "--config",
        [cf = p.config_file](const std::string& v) { *cf = v; },
        "flat key=value config file");
    for (const auto& [key, def] : RunConfig::defaults_map()) {
      cmd->add_option_function<std::string>(
          "--" + dashed(key),
          [ov = p.overrides, key = key](const std::string& v) {
            ov->emplace_back(key, v);
          },
          "config key " + key + " (default " + def + ")");
    }
    return p;
  };
  auto resolve_config = [](const Pending& p) {
    RunConfig cfg;
    if (!p.config_file->empty()) cfg.load_file(*p.config_file);
    for (const auto& [k, v] : *p.overrides) cfg.set(k, v);
    return cfg;
  };

  // synth
  auto* synth = app.add_subcommand("synth", "generate a deterministic synthetic corpus");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output corpus directory")->required();
  Pending synth_cfg = make_config(synth);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "ingest a raw review dump");
  std::string ingest_input, ingest_kind = "yelp", ingest_out;
  ingest->add_option("--input", ingest_input, "JSON Lines input file")->required();
  ingest->add_option("--kind", ingest_kind, "dataset kind: yelp|amazon|canonical");
  ingest->add_option("--out", ingest_out, "output corpus directory")->required();
  Pending ingest_cfg = make_config(ingest);

  // train-lm
  auto* tlm = app.add_subcommand("train-lm", "train the review language model");
  std::string tlm_corpus, tlm_out;
  tlm->add_option("--corpus", tlm_corpus, "corpus directory")->required();
  tlm->add_option("--out", tlm_out, "run directory")->required();
  Pending tlm_cfg = make_config(tlm);

  // train-clf
  auto* tclf = app.add_subcommand("train-clf", "train the rating classifier");
  std::string tclf_corpus, tclf_out;
  tclf->add_option("--corpus", tclf_corpus, "corpus directory")->required();
  tclf->add_option("--out", tclf_out, "run directory")->required();
  Pending tclf_cfg = make_config(tclf);

  // train-sum
  auto* tsum = app.add_subcommand("train-sum", "train the summarization model");
  std::string tsum_corpus, tsum_lm, tsum_out;
  tsum->add_option("--corpus", tsum_corpus, "corpus directory")->required();
  tsum->add_option("--lm", tsum_lm, "language model checkpoint stem");
  tsum->add_option("--out", tsum_out, "run directory")->required();
  Pending tsum_cfg = make_config(tsum);

  // summarize
  auto* summ = app.add_subcommand("summarize", "generate summaries for eval bundles");
  SummarizeInputs si;
  summ->add_option("--corpus", si.corpus_dir, "corpus directory")->required();
  summ->add_option("--checkpoint", si.checkpoint, "summarization model checkpoint stem");
  summ->add_option("--lm", si.lm, "language model stem (for --baseline untrained)");
  summ->add_option("--clf", si.clf, "classifier checkpoint stem")->required();
  summ->add_option("--baseline", si.baseline,
                   "baseline generator: extractive|lead|best|worst|untrained");
  summ->add_option("--out", si.out_file, "output summaries JSONL file")->required();
  Pending summ_cfg = make_config(summ);

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "score summaries into an evaluation report");
  std::string ev_summaries, ev_corpus, ev_clf, ev_lm, ev_refs, ev_out;
  eval->add_option("--summaries", ev_summaries, "summaries JSONL file")->required();
  eval->add_option("--corpus", ev_corpus, "corpus directory")->required();
  eval->add_option("--clf", ev_clf, "classifier checkpoint stem")->required();
  eval->add_option("--lm", ev_lm, "language model stem for NLL");
  eval->add_option("--references", ev_refs, "reference summaries JSONL");
  eval->add_option("--out", ev_out, "run directory for reports")->required();
  Pending eval_cfg = make_config(eval);

  // ablate
  auto* abl = app.add_subcommand("ablate", "train and compare model variants");
  std::string abl_corpus, abl_lm, abl_clf, abl_variants, abl_out;
  abl->add_option("--corpus", abl_corpus, "corpus directory")->required();
  abl->add_option("--lm", abl_lm, "language model checkpoint stem")->required();
  abl->add_option("--clf", abl_clf, "classifier checkpoint stem")->required();
  abl->add_option("--variants", abl_variants, "comma list (default: full + all six)");
  abl->add_option("--out", abl_out, "run directory")->required();
  Pending abl_cfg = make_config(abl);

  // vary-k
  auto* vk = app.add_subcommand("vary-k", "train and evaluate across bundle sizes");
  std::string vk_corpus, vk_lm, vk_clf, vk_out;
  bool vk_varying = false;
  vk->add_option("--corpus", vk_corpus, "corpus directory")->required();
  vk->add_option("--lm", vk_lm, "language model checkpoint stem")->required();
  vk->add_option("--clf", vk_clf, "classifier checkpoint stem")->required();
  vk->add_flag("--varying", vk_varying, "add the varying-k arm");
  vk->add_option("--out", vk_out, "run directory")->required();
  Pending vk_cfg = make_config(vk);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(resolve_config(synth_cfg), synth_out);
    if (*ingest) return cmd_ingest(resolve_config(ingest_cfg), ingest_input, ingest_kind, ingest_out);
    if (*tlm) return cmd_train_lm(resolve_config(tlm_cfg), tlm_corpus, tlm_out);
    if (*tclf) return cmd_train_clf(resolve_config(tclf_cfg), tclf_corpus, tclf_out);
    if (*tsum) return cmd_train_sum(resolve_config(tsum_cfg), tsum_corpus, tsum_lm, tsum_out);
    if (*summ) return cmd_summarize(resolve_config(summ_cfg), si);
    if (*eval) {
      return cmd_evaluate(resolve_config(eval_cfg), ev_summaries, ev_corpus, ev_clf,
                          ev_lm, ev_refs, ev_out);
    }
    if (*abl) {
      return cmd_ablate(resolve_config(abl_cfg), abl_corpus, abl_lm, abl_clf,
                        abl_variants, abl_out);
    }
    if (*vk) {
      return cmd_vary_k(resolve_config(vk_cfg), vk_corpus, vk_lm, vk_clf, vk_varying,
                        vk_out);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace cli
}  // namespace meansum
