#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "meansum/corpus.hpp"
#include "meansum/model.hpp"
#include "meansum/primitives.hpp"

namespace meansum {

struct TrainConfig {
  // sizes
  std::size_t hidden = 64;
  std::size_t embed = 32;
  std::size_t vocab_size = 512;
  std::size_t k = 8;
  std::size_t max_len = 150;  // review/summary token cap L
  // optimizer
  double lr_lm = 0.001;
  double lr_clf = 0.0001;
  double lr_sum = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = kAdamEps;
  double clip_norm = 5.0;
  // gumbel temperature schedule: tau_t = max(tau_min, tau * exp(-decay * t))
  double tau = 2.0;
  double tau_decay = 0.0;  // 0 keeps tau fixed
  double tau_min = 0.5;
  // budgets
  std::size_t lm_steps = 3000;
  std::size_t lm_bptt = 256;
  std::size_t clf_steps = 2000;
  std::size_t clf_batch = 16;
  double clf_dropout = 0.5;
  std::size_t clf_feature_maps = 128;
  std::size_t sum_steps = 2000;
  // varying-k arm: when non-empty, k is drawn uniformly from this list each step
  std::vector<std::size_t> k_list;
  // logging
  std::size_t log_interval = 50;
  std::size_t nll_eval_bundles = 8;
  bool log_wall_time = false;
  std::uint64_t seed = 1234;
  VariantSpec variant;
};

// ---------------------------------------------------------------------------
// metrics log
// ---------------------------------------------------------------------------

struct MetricsRow {
  std::int64_t step = 0;
  double l_rec = 0.0;
  double l_sim = 0.0;
  double l_model = 0.0;
  bool has_nll = false;
  double nll = 0.0;
  double seconds = 0.0;
};

class MetricsLog {
 public:
  void append(MetricsRow row) {
    if (!rows_.empty() && row.step <= rows_.back().step) {
      throw std::logic_error("MetricsLog: steps must strictly increase");
    }
    rows_.push_back(row);
  }

  const std::vector<MetricsRow>& rows() const { return rows_; }

  std::string to_csv() const {
    std::string out = "step,l_rec,l_sim,l_model,nll,seconds\n";
    char buf[160];
    for (const MetricsRow& r : rows_) {
      std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,", (long long)r.step,
                    r.l_rec, r.l_sim, r.l_model);
      out += buf;
      if (r.has_nll) {
        std::snprintf(buf, sizeof buf, "%.6f", r.nll);
        out += buf;
      } else {
        out += "nan";
      }
      std::snprintf(buf, sizeof buf, ",%.3f\n", r.seconds);
      out += buf;
    }
    return out;
  }

  void save_csv(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write metrics csv: " + path);
    f << to_csv();
  }

 private:
  std::vector<MetricsRow> rows_;
};

// ---------------------------------------------------------------------------
// shared data plumbing
// ---------------------------------------------------------------------------

inline void tokenize_corpus(std::vector<Review>& reviews, const Vocabulary& vocab) {
  for (Review& r : reviews) r.tokens = vocab.encode(r.text);
}

inline std::vector<std::string> eligible_entities(
    const std::map<std::string, std::vector<const Review*>>& by_entity,
    const std::vector<std::string>& split, std::size_t k) {
  std::vector<std::string> out;
  for (const std::string& e : split) {
    auto it = by_entity.find(e);
    if (it != by_entity.end() && it->second.size() >= k) out.push_back(e);
  }
  return out;
}

struct EvalBundle {
  std::string entity_id;
  std::vector<std::string> review_ids;
  std::vector<std::vector<std::size_t>> tokens;
  std::vector<int> ratings;
  std::vector<std::string> texts;
};

inline EvalBundle to_eval_bundle(const ReviewBundle& b) {
  EvalBundle e;
  e.entity_id = b.entity_id;
  for (const Review& r : b.reviews) {
    e.review_ids.push_back(r.review_id);
    e.tokens.push_back(r.tokens);
    e.ratings.push_back(r.rating);
    e.texts.push_back(r.text);
  }
  return e;
}

// Deterministic bundle set: cycles entities of the split in sorted order,
// sampling k reviews per bundle with a seed derived from the position.
inline std::vector<EvalBundle> sample_eval_bundles(
    const std::map<std::string, std::vector<const Review*>>& by_entity,
    const std::vector<std::string>& split, std::size_t k, std::size_t count,
    std::uint64_t seed) {
  std::vector<std::string> pool = eligible_entities(by_entity, split, k);
  if (pool.empty()) {
    throw InputError("no entities with at least " + std::to_string(k) +
                     " reviews in the requested split");
  }
  std::vector<EvalBundle> out;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string& entity = pool[i % pool.size()];
    out.push_back(to_eval_bundle(
        sample_bundle(by_entity, entity, k, seed + 0x9e37 * (i + 1))));
  }
  return out;
}

// Mean held-out summary NLL under a frozen language model: greedy summaries
// of the given bundles, scored per token.
inline double heldout_summary_nll(MeanSumModel& m, LanguageModel& lm,
                                  const std::vector<EvalBundle>& bundles,
                                  std::size_t max_len) {
  double total = 0.0;
  std::size_t n = 0;
  for (const EvalBundle& b : bundles) {
    std::vector<std::size_t> summary = summarize_greedy(m, b.tokens, max_len);
    if (summary.empty()) continue;
    total += summary_nll(lm, summary);
    ++n;
  }
  return n == 0 ? std::nan("") : total / double(n);
}

inline double collapse_score_on(MeanSumModel& m, const std::vector<EvalBundle>& bundles) {
  std::vector<LatentCode> codes;
  for (const EvalBundle& b : bundles) {
    for (const auto& tokens : b.tokens) codes.push_back(encode_review(m, tokens));
  }
  if (codes.size() < 2) return 0.0;
  return code_collapse_score(codes);
}

namespace detail {

class WallClock {
 public:
  explicit WallClock(bool enabled) : enabled_(enabled) {
    start_ = std::chrono::steady_clock::now();
  }
  // 0.0 when disabled so logged outputs stay byte-reproducible
  double seconds() const {
    if (!enabled_) return 0.0;
    auto d = std::chrono::steady_clock::now() - start_;
    return std::chrono::duration<double>(d).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

template <class Model>
class Snapshot {
 public:
  void capture(Model& m) {
    values_.clear();
    m.for_each([&](const std::string&, Tensor& t) { values_.push_back(t); });
    valid_ = true;
  }
  bool restore(Model& m) const {
    if (!valid_) return false;
    std::size_t i = 0;
    m.for_each([&](const std::string&, Tensor& t) { t = values_[i++]; });
    return true;
  }

 private:
  std::vector<Tensor> values_;
  bool valid_ = false;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// language model training
// ---------------------------------------------------------------------------

struct TrainedLm {
  LanguageModel lm;
  MetricsLog log;
  bool aborted = false;
  std::int64_t steps = 0;
};

// One input item is k same-entity reviews joined with end-of-review
// delimiters (and one leading delimiter). Each optimizer step consumes a
// subsequence of lm_bptt tokens; the carried state starts at zero per item
// and persists across that item's steps.
inline TrainedLm train_language_model(const TrainConfig& cfg,
                                      const std::vector<Review>& corpus,
                                      const CorpusSplits& splits,
                                      const Vocabulary& vocab) {
  auto by_entity = group_by_entity(corpus);
  std::vector<std::string> train_pool = eligible_entities(by_entity, splits.train, cfg.k);
  if (train_pool.empty()) throw InputError("train_language_model: no eligible train entities");

  Rng init_rng = Rng(cfg.seed).fork(1);
  TrainedLm out;
  out.lm = LanguageModel::init(vocab.size(), cfg.hidden, cfg.embed, vocab.hash(), init_rng);
  AdamConfig acfg{cfg.lr_lm, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.clip_norm};
  AdamOptimizer opt(out.lm.parameters(), acfg);

  // held-out sequences for validation NLL
  std::vector<EvalBundle> valid_bundles;
  const std::vector<std::string>& valid_split =
      splits.valid.empty() ? splits.train : splits.valid;
  valid_bundles = sample_eval_bundles(by_entity, valid_split, cfg.k,
                                      cfg.nll_eval_bundles, cfg.seed ^ 0xce11);

  auto valid_nll = [&]() {
    double total = 0.0;
    std::size_t count = 0;
    for (const EvalBundle& b : valid_bundles) {
      std::vector<std::size_t> seq = {Vocabulary::kDelim};
      for (const auto& tokens : b.tokens) {
        seq.insert(seq.end(), tokens.begin(), tokens.end());
        seq.push_back(Vocabulary::kDelim);
      }
      Tape tape;
      BoundLm bl = bind(tape, out.lm);
      StateVars s = zero_state(tape, cfg.hidden);
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        s = mlstm_step(tape, bl.cell, tape.row(bl.embedding, seq[i]), s);
        Var logits = tape.add(tape.matvec(bl.w_out, s.h), bl.b_out);
        total += tape.value(tape.xent(logits, seq[i + 1]))[0];
        ++count;
      }
    }
    return total / double(count);
  };

  detail::WallClock clock(cfg.log_wall_time);
  detail::Snapshot<LanguageModel> snapshot;
  snapshot.capture(out.lm);
  Rng data_rng = Rng(cfg.seed).fork(2);
  std::int64_t step = 0;
  while (step < std::int64_t(cfg.lm_steps)) {
    const std::string& entity = train_pool[data_rng.below(train_pool.size())];
    ReviewBundle bundle = sample_bundle(by_entity, entity, cfg.k, data_rng.next_u64());
    std::vector<std::size_t> seq = {Vocabulary::kDelim};
    for (const Review& r : bundle.reviews) {
      seq.insert(seq.end(), r.tokens.begin(), r.tokens.end());
      seq.push_back(Vocabulary::kDelim);
    }
    LmState carried{Tensor::zeros({cfg.hidden}), Tensor::zeros({cfg.hidden})};
    for (std::size_t pos = 0; pos + 1 < seq.size() && step < std::int64_t(cfg.lm_steps);
         pos += cfg.lm_bptt) {
      std::size_t end = std::min(pos + cfg.lm_bptt, seq.size() - 1);
      Tape tape;
      BoundLm bl = bind(tape, out.lm);
      StateVars s{tape.leaf(carried.h), tape.leaf(carried.c)};
      std::vector<Var> losses;
      for (std::size_t i = pos; i < end; ++i) {
        s = mlstm_step(tape, bl.cell, tape.row(bl.embedding, seq[i]), s);
        Var logits = tape.add(tape.matvec(bl.w_out, s.h), bl.b_out);
        losses.push_back(tape.xent(logits, seq[i + 1]));
      }
      Var loss = tape.scale(tape.add_n(std::move(losses)), 1.0 / double(end - pos));
      double loss_v = tape.value(loss)[0];
      ++step;
      if (!std::isfinite(loss_v)) {
        snapshot.restore(out.lm);
        out.aborted = true;
        out.steps = step;
        return out;
      }
      tape.backward(loss);
      opt.step(tape);
      carried = {tape.value(s.h), tape.value(s.c)};
      if (step % std::int64_t(cfg.log_interval) == 0 || step == std::int64_t(cfg.lm_steps)) {
        MetricsRow row;
        row.step = step;
        row.l_model = loss_v;
        row.has_nll = true;
        row.nll = valid_nll();
        row.seconds = clock.seconds();
        out.log.append(row);
        snapshot.capture(out.lm);
      }
    }
  }
  out.steps = step;
  return out;
}

// ---------------------------------------------------------------------------
// classifier training
// ---------------------------------------------------------------------------

struct TrainedClassifier {
  RatingClassifier clf;
  MetricsLog log;
  double valid_accuracy = 0.0;
  bool aborted = false;
  std::int64_t steps = 0;
};

inline double classifier_accuracy(RatingClassifier& clf,
                                  const std::vector<const Review*>& reviews) {
  if (reviews.empty()) return 0.0;
  std::size_t correct = 0;
  for (const Review* r : reviews) {
    if (predict_star(clf, r->tokens) == r->rating) ++correct;
  }
  return double(correct) / double(reviews.size());
}

inline TrainedClassifier train_classifier(const TrainConfig& cfg,
                                          const std::vector<Review>& corpus,
                                          const CorpusSplits& splits,
                                          const Vocabulary& vocab) {
  std::vector<const Review*> train_reviews, valid_reviews;
  {
    std::set<std::string> train_set(splits.train.begin(), splits.train.end());
    std::set<std::string> valid_set(splits.valid.begin(), splits.valid.end());
    for (const Review& r : corpus) {
      if (train_set.count(r.entity_id)) train_reviews.push_back(&r);
      if (valid_set.count(r.entity_id)) valid_reviews.push_back(&r);
    }
  }
  if (train_reviews.empty()) throw InputError("train_classifier: no training reviews");
  if (valid_reviews.empty()) valid_reviews = train_reviews;

  Rng init_rng = Rng(cfg.seed).fork(11);
  TrainedClassifier out;
  out.clf = RatingClassifier::init(vocab.size(), cfg.embed, cfg.clf_feature_maps,
                                   cfg.clf_dropout, vocab.hash(), init_rng);
  AdamConfig acfg{cfg.lr_clf, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.clip_norm};
  AdamOptimizer opt(out.clf.parameters(), acfg);

  detail::WallClock clock(cfg.log_wall_time);
  detail::Snapshot<RatingClassifier> snapshot;
  snapshot.capture(out.clf);
  Rng data_rng = Rng(cfg.seed).fork(12);
  Rng drop_rng = Rng(cfg.seed).fork(13);
  for (std::int64_t step = 1; step <= std::int64_t(cfg.clf_steps); ++step) {
    Tape tape;
    std::vector<Var> losses;
    for (std::size_t i = 0; i < cfg.clf_batch; ++i) {
      const Review* r = train_reviews[data_rng.below(train_reviews.size())];
      Var logits = classifier_logits(tape, out.clf, r->tokens, &drop_rng);
      losses.push_back(tape.xent(logits, std::size_t(r->rating - 1)));
    }
    Var loss = tape.scale(tape.add_n(std::move(losses)), 1.0 / double(cfg.clf_batch));
    double loss_v = tape.value(loss)[0];
    if (!std::isfinite(loss_v)) {
      snapshot.restore(out.clf);
      out.aborted = true;
      out.steps = step;
      return out;
    }
    tape.backward(loss);
    opt.step(tape);
    if (step % std::int64_t(cfg.log_interval) == 0 || step == std::int64_t(cfg.clf_steps)) {
      MetricsRow row;
      row.step = step;
      row.l_model = loss_v;
      row.seconds = clock.seconds();
      out.log.append(row);
      snapshot.capture(out.clf);
    }
    out.steps = step;
  }
  out.valid_accuracy = classifier_accuracy(out.clf, valid_reviews);
  return out;
}

// ---------------------------------------------------------------------------
// summarizer training
// ---------------------------------------------------------------------------

struct TrainedSummarizer {
  MeanSumModel model;
  MetricsLog log;
  bool aborted = false;
  std::int64_t steps = 0;
  double final_nll = std::nan("");
  double collapse = 0.0;  // mean pairwise code cosine on the eval bundles
};

// eval_lm scores held-out greedy summaries during training (the NLL curve);
// it is also the initializer when the variant uses a pretrained LM.
inline TrainedSummarizer train_meansum(const TrainConfig& cfg,
                                       const std::vector<Review>& corpus,
                                       const CorpusSplits& splits,
                                       const Vocabulary& vocab,
                                       LanguageModel* eval_lm) {
  auto by_entity = group_by_entity(corpus);
  std::size_t max_k = cfg.k;
  for (std::size_t k : cfg.k_list) max_k = std::max(max_k, k);
  std::vector<std::string> train_pool = eligible_entities(by_entity, splits.train, max_k);
  if (train_pool.empty()) throw InputError("train_meansum: no eligible train entities");

  Rng init_rng = Rng(cfg.seed).fork(21);
  TrainedSummarizer out;
  out.model = MeanSumModel::init(vocab.size(), cfg.hidden, cfg.embed, vocab.hash(),
                                 cfg.variant, init_rng);
  if (cfg.variant.use_pretrained_lm) {
    if (!eval_lm) throw InputError("train_meansum: variant needs a pretrained language model");
    out.model.init_from_lm(*eval_lm);
  }
  AdamConfig acfg{cfg.lr_sum, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.clip_norm};
  AdamOptimizer opt(out.model.parameters(), acfg);

  const std::vector<std::string>& valid_split =
      splits.valid.empty() ? splits.train : splits.valid;
  std::vector<EvalBundle> eval_bundles = sample_eval_bundles(
      by_entity, valid_split, cfg.k, cfg.nll_eval_bundles, cfg.seed ^ 0x5011);

  detail::WallClock clock(cfg.log_wall_time);
  detail::Snapshot<MeanSumModel> snapshot;
  snapshot.capture(out.model);
  Rng data_rng = Rng(cfg.seed).fork(22);
  Rng gumbel_rng = Rng(cfg.seed).fork(23);
  for (std::int64_t step = 1; step <= std::int64_t(cfg.sum_steps); ++step) {
    std::size_t k = cfg.k;
    if (!cfg.k_list.empty()) k = cfg.k_list[data_rng.below(cfg.k_list.size())];
    const std::string& entity = train_pool[data_rng.below(train_pool.size())];
    ReviewBundle bundle = sample_bundle(by_entity, entity, k, data_rng.next_u64());
    std::vector<std::vector<std::size_t>> tokens;
    for (const Review& r : bundle.reviews) tokens.push_back(r.tokens);

    double tau = std::max(cfg.tau_min, cfg.tau * std::exp(-cfg.tau_decay * double(step)));
    Tape tape;
    MeanSumLosses losses = meansum_losses(tape, out.model, tokens, cfg.max_len,
                                          tau, gumbel_rng);
    if (!std::isfinite(losses.model)) {
      snapshot.restore(out.model);
      out.aborted = true;
      out.steps = step;
      return out;
    }
    tape.backward(losses.model_var);
    opt.step(tape);
    out.model.trained_steps = step;
    if (step % std::int64_t(cfg.log_interval) == 0 || step == std::int64_t(cfg.sum_steps)) {
      MetricsRow row;
      row.step = step;
      row.l_rec = losses.rec;
      row.l_sim = losses.sim;
      row.l_model = losses.model;
      if (eval_lm) {
        row.nll = heldout_summary_nll(out.model, *eval_lm, eval_bundles, cfg.max_len);
        row.has_nll = std::isfinite(row.nll);
        out.final_nll = row.nll;
      }
      row.seconds = clock.seconds();
      out.log.append(row);
      snapshot.capture(out.model);
    }
    out.steps = step;
  }
  out.collapse = collapse_score_on(out.model, eval_bundles);
  return out;
}

}  // namespace meansum
