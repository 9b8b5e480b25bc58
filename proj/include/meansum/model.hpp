#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meansum/checkpoint.hpp"
#include "meansum/primitives.hpp"
#include "meansum/subword.hpp"

namespace meansum {

// ---------------------------------------------------------------------------
// shared pieces
// ---------------------------------------------------------------------------

// Concatenated final hidden and cell states of the encoder: z = [h, c].
struct LatentCode {
  Tensor h, c;
};

enum class LossKind { standard, cycle, early_cosine };

struct VariantSpec {
  bool use_pretrained_lm = true;
  bool use_autoencoder = true;
  LossKind loss_kind = LossKind::standard;
  bool tie_encoders = true;
  bool tie_decoders = true;

  static VariantSpec full() { return {}; }

  static VariantSpec named(const std::string& name) {
    VariantSpec v;
    if (name == "full") return v;
    if (name == "no_pretrained_lm") { v.use_pretrained_lm = false; return v; }
    if (name == "no_autoencoder") { v.use_autoencoder = false; return v; }
    if (name == "cycle_loss") { v.loss_kind = LossKind::cycle; return v; }
    if (name == "early_cosine") { v.loss_kind = LossKind::early_cosine; return v; }
    if (name == "untied_decoders") { v.tie_decoders = false; return v; }
    if (name == "untied_encoders") { v.tie_encoders = false; return v; }
    throw InputError("unknown model variant: " + name);
  }

  std::string name() const {
    if (!use_pretrained_lm) return "no_pretrained_lm";
    if (!use_autoencoder) return "no_autoencoder";
    if (loss_kind == LossKind::cycle) return "cycle_loss";
    if (loss_kind == LossKind::early_cosine) return "early_cosine";
    if (!tie_decoders) return "untied_decoders";
    if (!tie_encoders) return "untied_encoders";
    return "full";
  }

  static const std::vector<std::string>& ablation_names() {
    static const std::vector<std::string> v = {
        "no_pretrained_lm", "no_autoencoder", "cycle_loss",
        "early_cosine",     "untied_decoders", "untied_encoders"};
    return v;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["use_pretrained_lm"] = use_pretrained_lm;
    j["use_autoencoder"] = use_autoencoder;
    j["loss_kind"] = loss_kind == LossKind::standard     ? "standard"
                     : loss_kind == LossKind::cycle      ? "cycle"
                                                         : "early_cosine";
    j["tie_encoders"] = tie_encoders;
    j["tie_decoders"] = tie_decoders;
    return j;
  }

  static VariantSpec from_json(const nlohmann::json& j) {
    VariantSpec v;
    v.use_pretrained_lm = j.at("use_pretrained_lm").get<bool>();
    v.use_autoencoder = j.at("use_autoencoder").get<bool>();
    std::string lk = j.at("loss_kind").get<std::string>();
    v.loss_kind = lk == "standard" ? LossKind::standard
                  : lk == "cycle"  ? LossKind::cycle
                                   : LossKind::early_cosine;
    v.tie_encoders = j.at("tie_encoders").get<bool>();
    v.tie_decoders = j.at("tie_decoders").get<bool>();
    return v;
  }
};

inline void require_vocab_match(std::uint64_t model_hash, std::uint64_t vocab_hash,
                                const std::string& what) {
  if (model_hash != vocab_hash) {
    throw InputError(what + ": vocabulary hash mismatch (checkpoint " +
                     hash_hex(model_hash) + " vs vocabulary " + hash_hex(vocab_hash) + ")");
  }
}

// ---------------------------------------------------------------------------
// language model
// ---------------------------------------------------------------------------

struct LanguageModel {
  std::size_t vocab = 0, hidden = 0, embed = 0;
  std::uint64_t vocab_hash = 0;
  Tensor embedding;  // [V, e]
  MlstmParams cell;
  Tensor w_out;  // [V, n]
  Tensor b_out;  // [V]

  static LanguageModel init(std::size_t vocab, std::size_t hidden,
                            std::size_t embed, std::uint64_t vocab_hash,
                            Rng& rng, double scale = 0.08) {
    LanguageModel lm;
    lm.vocab = vocab;
    lm.hidden = hidden;
    lm.embed = embed;
    lm.vocab_hash = vocab_hash;
    lm.embedding = Tensor::zeros({vocab, embed});
    for (double& v : lm.embedding.data) v = rng.uniform(-scale, scale);
    lm.cell = MlstmParams::init(hidden, embed, rng, scale);
    lm.w_out = Tensor::zeros({vocab, hidden});
    for (double& v : lm.w_out.data) v = rng.uniform(-scale, scale);
    lm.b_out = Tensor::zeros({vocab});
    return lm;
  }

  template <class F>
  void for_each(F&& f) {
    f("embedding", embedding);
    cell.for_each("cell", f);
    f("w_out", w_out);
    f("b_out", b_out);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

struct BoundLm {
  Var embedding, w_out, b_out;
  MlstmVars cell;
};

inline BoundLm bind(Tape& tape, LanguageModel& lm) {
  return {tape.param(lm.embedding), tape.param(lm.w_out), tape.param(lm.b_out),
          bind(tape, lm.cell)};
}

// Value-level carried state for streaming inference.
struct LmState {
  Tensor h, c;
};

inline LmState lm_zero_state(const LanguageModel& lm) {
  return {Tensor::zeros({lm.hidden}), Tensor::zeros({lm.hidden})};
}

// Feed one token, get next-token logits and the advanced state. Deterministic
// pure function of (model, token, state).
inline std::pair<Tensor, LmState> lm_next_token_logits(LanguageModel& lm,
                                                       std::size_t token,
                                                       const LmState& state) {
  if (token >= lm.vocab) throw InputError("lm_next_token_logits: token out of range");
  Tape tape;
  BoundLm b = bind(tape, lm);
  StateVars s{tape.leaf(state.h), tape.leaf(state.c)};
  StateVars next = mlstm_step(tape, b.cell, tape.row(b.embedding, token), s);
  Var logits = tape.add(tape.matvec(b.w_out, next.h), b.b_out);
  return {tape.value(logits), {tape.value(next.h), tape.value(next.c)}};
}

// Mean per-token negative log-likelihood of a token sequence under the LM,
// starting from the zero state with the delimiter as the first input (the
// LM's training convention: a delimiter precedes every review).
inline double summary_nll(LanguageModel& lm, const std::vector<std::size_t>& tokens) {
  if (tokens.empty()) throw InputError("summary_nll: empty token sequence");
  Tape tape;
  BoundLm b = bind(tape, lm);
  StateVars s = zero_state(tape, lm.hidden);
  std::size_t prev = Vocabulary::kDelim;
  double total = 0.0;
  for (std::size_t target : tokens) {
    if (target >= lm.vocab) throw InputError("summary_nll: token out of range");
    s = mlstm_step(tape, b.cell, tape.row(b.embedding, prev), s);
    Var logits = tape.add(tape.matvec(b.w_out, s.h), b.b_out);
    total += tape.value(tape.xent(logits, target))[0];
    prev = target;
  }
  return total / double(tokens.size());
}

// ---------------------------------------------------------------------------
// MeanSum model
// ---------------------------------------------------------------------------

struct MeanSumModel {
  std::size_t vocab = 0, hidden = 0, embed = 0;
  std::uint64_t vocab_hash = 0;
  std::int64_t trained_steps = 0;
  VariantSpec variant;
  Tensor embedding;  // shared by every encoder and decoder
  MlstmParams encoder;
  MlstmParams summary_encoder_untied;  // live only when !tie_encoders
  MlstmParams decoder;
  MlstmParams summary_decoder_untied;  // live only when !tie_decoders
  Tensor w_out, b_out;
  Tensor w_out_summary_untied, b_out_summary_untied;

  // Same parameter object under tying: mutations on the review side are
  // observable on the summary side by construction.
  MlstmParams& summary_encoder() {
    return variant.tie_encoders ? encoder : summary_encoder_untied;
  }
  MlstmParams& summary_decoder() {
    return variant.tie_decoders ? decoder : summary_decoder_untied;
  }
  Tensor& w_out_summary() { return variant.tie_decoders ? w_out : w_out_summary_untied; }
  Tensor& b_out_summary() { return variant.tie_decoders ? b_out : b_out_summary_untied; }

  static MeanSumModel init(std::size_t vocab, std::size_t hidden, std::size_t embed,
                           std::uint64_t vocab_hash, VariantSpec variant, Rng& rng,
                           double scale = 0.08) {
    MeanSumModel m;
    m.vocab = vocab;
    m.hidden = hidden;
    m.embed = embed;
    m.vocab_hash = vocab_hash;
    m.variant = variant;
    m.embedding = Tensor::zeros({vocab, embed});
    for (double& v : m.embedding.data) v = rng.uniform(-scale, scale);
    m.encoder = MlstmParams::init(hidden, embed, rng, scale);
    m.decoder = MlstmParams::init(hidden, embed, rng, scale);
    auto proj = [&] {
      Tensor t = Tensor::zeros({vocab, hidden});
      for (double& v : t.data) v = rng.uniform(-scale, scale);
      return t;
    };
    m.w_out = proj();
    m.b_out = Tensor::zeros({vocab});
    if (!variant.tie_encoders) m.summary_encoder_untied = MlstmParams::init(hidden, embed, rng, scale);
    if (!variant.tie_decoders) {
      m.summary_decoder_untied = MlstmParams::init(hidden, embed, rng, scale);
      m.w_out_summary_untied = proj();
      m.b_out_summary_untied = Tensor::zeros({vocab});
    }
    return m;
  }

  // Pretrained-LM initialization: every encoder and decoder starts from the
  // language model weights, as does the shared embedding and projection.
  void init_from_lm(const LanguageModel& lm) {
    if (lm.vocab != vocab || lm.hidden != hidden || lm.embed != embed) {
      throw InputError("init_from_lm: size mismatch with language model");
    }
    require_vocab_match(lm.vocab_hash, vocab_hash, "init_from_lm");
    embedding = lm.embedding;
    encoder = lm.cell;
    decoder = lm.cell;
    w_out = lm.w_out;
    b_out = lm.b_out;
    if (!variant.tie_encoders) summary_encoder_untied = lm.cell;
    if (!variant.tie_decoders) {
      summary_decoder_untied = lm.cell;
      w_out_summary_untied = lm.w_out;
      b_out_summary_untied = lm.b_out;
    }
  }

  template <class F>
  void for_each(F&& f) {
    f("embedding", embedding);
    encoder.for_each("encoder", f);
    decoder.for_each("decoder", f);
    f("w_out", w_out);
    f("b_out", b_out);
    if (!variant.tie_encoders) summary_encoder_untied.for_each("summary_encoder", f);
    if (!variant.tie_decoders) {
      summary_decoder_untied.for_each("summary_decoder", f);
      f("w_out_summary", w_out_summary_untied);
      f("b_out_summary", b_out_summary_untied);
    }
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

struct BoundMeanSum {
  std::size_t vocab = 0, hidden = 0;
  Var embedding;
  MlstmVars encoder, summary_encoder, decoder, summary_decoder;
  Var w_out, b_out, w_out_summary, b_out_summary;
};

inline BoundMeanSum bind(Tape& tape, MeanSumModel& m) {
  BoundMeanSum b;
  b.vocab = m.vocab;
  b.hidden = m.hidden;
  b.embedding = tape.param(m.embedding);
  b.encoder = bind(tape, m.encoder);
  b.summary_encoder = bind(tape, m.summary_encoder());
  b.decoder = bind(tape, m.decoder);
  b.summary_decoder = bind(tape, m.summary_decoder());
  b.w_out = tape.param(m.w_out);
  b.b_out = tape.param(m.b_out);
  b.w_out_summary = tape.param(m.w_out_summary());
  b.b_out_summary = tape.param(m.b_out_summary());
  return b;
}

// ---------------------------------------------------------------------------
// sequence helpers (tape level)
// ---------------------------------------------------------------------------

inline StateVars encode_tokens(Tape& tape, const MlstmVars& cell, Var embedding,
                               const std::vector<std::size_t>& tokens) {
  if (tokens.empty()) throw InputError("encode: empty token sequence");
  StateVars s = zero_state(tape, cell.n);
  for (std::size_t id : tokens) {
    s = mlstm_step(tape, cell, tape.row(embedding, id), s);
  }
  return s;
}

inline StateVars encode_embeds(Tape& tape, const MlstmVars& cell,
                               const std::vector<Var>& embeds) {
  if (embeds.empty()) throw InputError("encode: empty embedding sequence");
  StateVars s = zero_state(tape, cell.n);
  for (Var e : embeds) s = mlstm_step(tape, cell, e, s);
  return s;
}

// Teacher-forced reconstruction: decoder state starts at the latent, inputs
// are the delimiter followed by the shifted gold tokens, and the target
// sequence is the gold tokens plus the terminal delimiter. Returns the mean
// per-token cross-entropy.
inline Var decode_teacher_forced(Tape& tape, const MlstmVars& cell, Var w_out,
                                 Var b_out, Var embedding, StateVars init,
                                 const std::vector<std::size_t>& gold) {
  StateVars s = init;
  std::vector<Var> losses;
  std::size_t prev = Vocabulary::kDelim;
  for (std::size_t i = 0; i <= gold.size(); ++i) {
    s = mlstm_step(tape, cell, tape.row(embedding, prev), s);
    Var logits = tape.add(tape.matvec(w_out, s.h), b_out);
    std::size_t target = i < gold.size() ? gold[i] : Vocabulary::kDelim;
    losses.push_back(tape.xent(logits, target));
    prev = target;
  }
  return tape.scale(tape.add_n(std::move(losses)), 1.0 / double(gold.size() + 1));
}

struct StGeneration {
  std::vector<std::size_t> tokens;  // emitted ids, terminal delimiter excluded
  std::vector<Var> soft;            // relaxed distribution per emitted token
  std::vector<Var> st_embeds;       // straight-through embedding per token
  bool hit_max_len = false;
};

// Autoregressive straight-through generation from a latent: each step feeds
// the straight-through embedding of the previous output. Stops on the
// delimiter or at max_len.
inline StGeneration generate_summary_st(Tape& tape, const MlstmVars& cell,
                                        Var w_out, Var b_out, Var embedding,
                                        StateVars init, std::size_t max_len,
                                        double tau, Rng& rng) {
  if (tau <= 0.0) throw InputError("generate_summary_st: tau must be > 0");
  StGeneration gen;
  StateVars s = init;
  Var input = tape.row(embedding, Vocabulary::kDelim);
  for (std::size_t t = 0; t < max_len; ++t) {
    s = mlstm_step(tape, cell, input, s);
    Var logits = tape.add(tape.matvec(w_out, s.h), b_out);
    GumbelSample sample = gumbel_softmax_st(tape, logits, GumbelConfig{tau}, rng);
    if (sample.hard == Vocabulary::kDelim) return gen;
    Var emb = tape.st_embed(embedding, sample.soft, sample.hard);
    gen.tokens.push_back(sample.hard);
    gen.soft.push_back(sample.soft);
    gen.st_embeds.push_back(emb);
    input = emb;
  }
  gen.hit_max_len = true;
  return gen;
}

// Greedy decoding from a latent; argmax ties break toward the lowest token
// id. Deterministic, shared by every inference path.
inline std::vector<std::size_t> generate_summary_greedy(Tape& tape,
                                                        const MlstmVars& cell,
                                                        Var w_out, Var b_out,
                                                        Var embedding,
                                                        StateVars init,
                                                        std::size_t max_len) {
  std::vector<std::size_t> out;
  StateVars s = init;
  std::size_t prev = Vocabulary::kDelim;
  for (std::size_t t = 0; t < max_len; ++t) {
    s = mlstm_step(tape, cell, tape.row(embedding, prev), s);
    Var logits = tape.add(tape.matvec(w_out, s.h), b_out);
    std::size_t next = argmax_lowest(tape.value(logits));
    if (next == Vocabulary::kDelim) break;
    out.push_back(next);
    prev = next;
  }
  return out;
}

// ---------------------------------------------------------------------------
// value-level inference API
// ---------------------------------------------------------------------------

inline LatentCode encode_review(MeanSumModel& m, const std::vector<std::size_t>& tokens) {
  Tape tape;
  BoundMeanSum b = bind(tape, m);
  StateVars s = encode_tokens(tape, b.encoder, b.embedding, tokens);
  return {tape.value(s.h), tape.value(s.c)};
}

// Elementwise mean over hidden and cell states; bitwise permutation
// invariant (see Tape::mean_stack).
inline LatentCode combine_mean(const std::vector<LatentCode>& codes) {
  if (codes.empty()) throw InputError("combine_mean: empty code list");
  Tape tape;
  std::vector<Var> hs, cs;
  for (const LatentCode& z : codes) {
    hs.push_back(tape.leaf(z.h));
    cs.push_back(tape.leaf(z.c));
  }
  return {tape.value(tape.mean_stack(hs)), tape.value(tape.mean_stack(cs))};
}

// encode -> mean -> greedy decode. The single summarization path used by the
// trained model, the untrained baseline, and evaluation.
inline std::vector<std::size_t> summarize_greedy(
    MeanSumModel& m, const std::vector<std::vector<std::size_t>>& bundle_tokens,
    std::size_t max_len) {
  Tape tape;
  BoundMeanSum b = bind(tape, m);
  std::vector<Var> hs, cs;
  for (const auto& tokens : bundle_tokens) {
    StateVars s = encode_tokens(tape, b.encoder, b.embedding, tokens);
    hs.push_back(s.h);
    cs.push_back(s.c);
  }
  StateVars zbar{tape.mean_stack(hs), tape.mean_stack(cs)};
  return generate_summary_greedy(tape, b.summary_decoder, b.w_out_summary,
                                 b.b_out_summary, b.embedding, zbar, max_len);
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

struct MeanSumLosses {
  double rec = 0.0;    // reconstruction term (cycle loss lives here for that variant)
  double sim = 0.0;    // similarity term
  double model = 0.0;  // rec + sim, exact
  Var model_var;       // tape node for backward
};

// Average cosine distance between each review's hidden state and the
// re-encoded summary hidden state.
inline Var similarity_loss(Tape& tape, const std::vector<Var>& review_h, Var summary_h) {
  std::vector<Var> terms;
  for (Var h : review_h) terms.push_back(tape.cosine_distance(h, summary_h));
  return tape.scale(tape.add_n(std::move(terms)), 1.0 / double(review_h.size()));
}

// Early-cosine similarity on the full codes z = [h, c] against their mean.
inline Var early_cosine_loss(Tape& tape, const std::vector<Var>& review_h,
                             const std::vector<Var>& review_c, StateVars zbar) {
  Var zbar_full = tape.concat(zbar.h, zbar.c);
  std::vector<Var> terms;
  for (std::size_t j = 0; j < review_h.size(); ++j) {
    Var zj = tape.concat(review_h[j], review_c[j]);
    terms.push_back(tape.cosine_distance(zj, zbar_full));
  }
  return tape.scale(tape.add_n(std::move(terms)), 1.0 / double(review_h.size()));
}

// Builds the full variant-dependent training graph for one bundle and returns
// the loss terms. model == rec + sim holds exactly for every variant.
inline MeanSumLosses meansum_losses(Tape& tape, MeanSumModel& m,
                                    const std::vector<std::vector<std::size_t>>& bundle,
                                    std::size_t max_len, double tau, Rng& rng) {
  if (bundle.empty()) throw InputError("meansum_losses: empty bundle");
  BoundMeanSum b = bind(tape, m);
  std::size_t k = bundle.size();

  std::vector<Var> hs, cs;
  for (const auto& tokens : bundle) {
    StateVars s = encode_tokens(tape, b.encoder, b.embedding, tokens);
    hs.push_back(s.h);
    cs.push_back(s.c);
  }
  StateVars zbar{tape.mean_stack(hs), tape.mean_stack(cs)};

  Var rec = tape.leaf(Tensor::scalar(0.0));
  Var sim = tape.leaf(Tensor::scalar(0.0));

  switch (m.variant.loss_kind) {
    case LossKind::standard: {
      if (m.variant.use_autoencoder) {
        std::vector<Var> terms;
        for (std::size_t j = 0; j < k; ++j) {
          terms.push_back(decode_teacher_forced(tape, b.decoder, b.w_out, b.b_out,
                                                b.embedding, StateVars{hs[j], cs[j]},
                                                bundle[j]));
        }
        rec = tape.add_n(std::move(terms));
      }
      StGeneration gen = generate_summary_st(tape, b.summary_decoder, b.w_out_summary,
                                             b.b_out_summary, b.embedding, zbar,
                                             max_len, tau, rng);
      if (gen.tokens.empty()) {
        // zero-length summary: distance 1 to every review by the zero-norm
        // convention, constant (nothing to push gradients into)
        sim = tape.leaf(Tensor::scalar(1.0));
      } else {
        StateVars enc = encode_embeds(tape, b.summary_encoder, gen.st_embeds);
        sim = similarity_loss(tape, hs, enc.h);
      }
      break;
    }
    case LossKind::cycle: {
      StGeneration gen = generate_summary_st(tape, b.summary_decoder, b.w_out_summary,
                                             b.b_out_summary, b.embedding, zbar,
                                             max_len, tau, rng);
      StateVars enc = gen.tokens.empty()
                          ? zero_state(tape, m.hidden)
                          : encode_embeds(tape, b.summary_encoder, gen.st_embeds);
      std::vector<Var> terms;
      for (const auto& tokens : bundle) {
        terms.push_back(decode_teacher_forced(tape, b.decoder, b.w_out, b.b_out,
                                              b.embedding, enc, tokens));
      }
      rec = tape.add_n(std::move(terms));
      break;
    }
    case LossKind::early_cosine: {
      if (m.variant.use_autoencoder) {
        std::vector<Var> terms;
        for (std::size_t j = 0; j < k; ++j) {
          terms.push_back(decode_teacher_forced(tape, b.decoder, b.w_out, b.b_out,
                                                b.embedding, StateVars{hs[j], cs[j]},
                                                bundle[j]));
        }
        rec = tape.add_n(std::move(terms));
      }
      sim = early_cosine_loss(tape, hs, cs, zbar);
      break;
    }
  }

  Var model = tape.add(rec, sim);
  MeanSumLosses out;
  out.rec = tape.value(rec)[0];
  out.sim = tape.value(sim)[0];
  out.model = tape.value(model)[0];
  out.model_var = model;
  return out;
}

// Mean pairwise cosine similarity of codes across distinct reviews; values
// above 0.99 indicate the encoder collapsed to an input-independent constant
// (the no-autoencoder failure mode).
inline double code_collapse_score(const std::vector<LatentCode>& codes) {
  if (codes.size() < 2) throw InputError("code_collapse_score: need at least 2 codes");
  Tape tape;
  std::vector<Var> zs;
  for (const LatentCode& z : codes) {
    zs.push_back(tape.concat(tape.leaf(z.h), tape.leaf(z.c)));
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t j = i + 1; j < zs.size(); ++j) {
      total += 1.0 - tape.value(tape.cosine_distance(zs[i], zs[j]))[0];
      ++pairs;
    }
  }
  return total / double(pairs);
}

// ---------------------------------------------------------------------------
// rating classifier (multi-channel text CNN)
// ---------------------------------------------------------------------------

struct RatingClassifier {
  std::size_t vocab = 0, embed = 0, feature_maps = 0;
  std::vector<std::size_t> widths = {3, 4, 5};
  double dropout = 0.5;
  std::uint64_t vocab_hash = 0;
  Tensor embedding;                 // [V, e]
  std::vector<Tensor> kernels;      // per width: [F, width*e]
  std::vector<Tensor> kernel_bias;  // per width: [F]
  Tensor w_head;                    // [5, widths.size()*F]
  Tensor b_head;                    // [5]

  static RatingClassifier init(std::size_t vocab, std::size_t embed,
                               std::size_t feature_maps, double dropout,
                               std::uint64_t vocab_hash, Rng& rng) {
    RatingClassifier c;
    c.vocab = vocab;
    c.embed = embed;
    c.feature_maps = feature_maps;
    c.dropout = dropout;
    c.vocab_hash = vocab_hash;
    // fan-scaled uniform init for the conv stack, small uniform embeddings
    auto glorot = [&](std::initializer_list<std::size_t> dims, std::size_t fan_in,
                      std::size_t fan_out) {
      double s = std::sqrt(6.0 / double(fan_in + fan_out));
      Tensor t = Tensor::zeros(dims);
      for (double& v : t.data) v = rng.uniform(-s, s);
      return t;
    };
    c.embedding = Tensor::zeros({vocab, embed});
    for (double& v : c.embedding.data) v = rng.uniform(-0.1, 0.1);
    for (std::size_t w : c.widths) {
      c.kernels.push_back(glorot({feature_maps, w * embed}, w * embed, feature_maps));
      c.kernel_bias.push_back(Tensor::zeros({feature_maps}));
    }
    c.w_head = glorot({5, c.widths.size() * feature_maps},
                      c.widths.size() * feature_maps, 5);
    c.b_head = Tensor::zeros({5});
    return c;
  }

  template <class F>
  void for_each(F&& f) {
    f("embedding", embedding);
    for (std::size_t i = 0; i < widths.size(); ++i) {
      std::string w = std::to_string(widths[i]);
      f("conv" + w + "_kernels", kernels[i]);
      f("conv" + w + "_bias", kernel_bias[i]);
    }
    f("w_head", w_head);
    f("b_head", b_head);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for_each([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

// Logits over the 5 stars. Sequences shorter than the widest filter are
// padded with the PAD token. Dropout applies only when a training rng is
// passed.
inline Var classifier_logits(Tape& tape, RatingClassifier& c,
                             std::vector<std::size_t> tokens, Rng* train_rng) {
  std::size_t widest = *std::max_element(c.widths.begin(), c.widths.end());
  while (tokens.size() < widest) tokens.push_back(Vocabulary::kPad);
  Var emb = tape.rows(tape.param(c.embedding), tokens);
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < c.widths.size(); ++i) {
    Var feat = tape.conv1d(emb, tape.param(c.kernels[i]), tape.param(c.kernel_bias[i]),
                           c.widths[i]);
    pooled.push_back(tape.max_over_time(tape.relu(feat)));
  }
  Var features = pooled[0];
  for (std::size_t i = 1; i < pooled.size(); ++i) features = tape.concat(features, pooled[i]);
  if (train_rng) features = tape.dropout(features, c.dropout, *train_rng);
  return tape.add(tape.matvec(tape.param(c.w_head), features), tape.param(c.b_head));
}

// Probability vector over the 5 stars, summing to 1.
inline std::vector<double> classify_rating(RatingClassifier& c,
                                           const std::vector<std::size_t>& tokens) {
  Tape tape;
  Var probs = tape.softmax(classifier_logits(tape, c, tokens, nullptr));
  return tape.value(probs).data;
}

// Argmax star; ties break toward the lowest star.
inline int predict_star(RatingClassifier& c, const std::vector<std::size_t>& tokens) {
  std::vector<double> p = classify_rating(c, tokens);
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = i;
  }
  return int(best) + 1;
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

inline void save_lm(const std::string& stem, LanguageModel& lm, std::int64_t step) {
  nlohmann::ordered_json h;
  h["kind"] = "lm";
  h["vocab"] = lm.vocab;
  h["hidden"] = lm.hidden;
  h["embed"] = lm.embed;
  h["vocab_hash"] = hash_hex(lm.vocab_hash);
  h["step"] = step;
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  lm.for_each([&](const std::string& n, Tensor& t) { arrays.emplace_back(n, &t); });
  save_arrays(stem, std::move(h), arrays);
}

inline LanguageModel load_lm(const std::string& stem) {
  Checkpoint cp = load_arrays(stem);
  if (cp.header.value("kind", "") != "lm") {
    throw InputError("checkpoint is not a language model: " + stem);
  }
  Rng rng(0);
  LanguageModel lm = LanguageModel::init(cp.header.at("vocab").get<std::size_t>(),
                                         cp.header.at("hidden").get<std::size_t>(),
                                         cp.header.at("embed").get<std::size_t>(),
                                         hash_from_hex(cp.header.at("vocab_hash")), rng);
  lm.for_each([&](const std::string& n, Tensor& t) { cp.restore(n, t); });
  return lm;
}

inline void save_meansum(const std::string& stem, MeanSumModel& m) {
  nlohmann::ordered_json h;
  h["kind"] = "meansum";
  h["vocab"] = m.vocab;
  h["hidden"] = m.hidden;
  h["embed"] = m.embed;
  h["vocab_hash"] = hash_hex(m.vocab_hash);
  h["step"] = m.trained_steps;
  h["variant"] = m.variant.to_json();
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  m.for_each([&](const std::string& n, Tensor& t) { arrays.emplace_back(n, &t); });
  save_arrays(stem, std::move(h), arrays);
}

inline MeanSumModel load_meansum(const std::string& stem) {
  Checkpoint cp = load_arrays(stem);
  if (cp.header.value("kind", "") != "meansum") {
    throw InputError("checkpoint is not a summarization model: " + stem);
  }
  Rng rng(0);
  MeanSumModel m = MeanSumModel::init(cp.header.at("vocab").get<std::size_t>(),
                                      cp.header.at("hidden").get<std::size_t>(),
                                      cp.header.at("embed").get<std::size_t>(),
                                      hash_from_hex(cp.header.at("vocab_hash")),
                                      VariantSpec::from_json(cp.header.at("variant")), rng);
  m.trained_steps = cp.header.value("step", 0);
  m.for_each([&](const std::string& n, Tensor& t) { cp.restore(n, t); });
  return m;
}

inline void save_classifier(const std::string& stem, RatingClassifier& c,
                            std::int64_t step) {
  nlohmann::ordered_json h;
  h["kind"] = "classifier";
  h["vocab"] = c.vocab;
  h["embed"] = c.embed;
  h["feature_maps"] = c.feature_maps;
  h["widths"] = c.widths;
  h["dropout"] = c.dropout;
  h["vocab_hash"] = hash_hex(c.vocab_hash);
  h["step"] = step;
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  c.for_each([&](const std::string& n, Tensor& t) { arrays.emplace_back(n, &t); });
  save_arrays(stem, std::move(h), arrays);
}

inline RatingClassifier load_classifier(const std::string& stem) {
  Checkpoint cp = load_arrays(stem);
  if (cp.header.value("kind", "") != "classifier") {
    throw InputError("checkpoint is not a classifier: " + stem);
  }
  RatingClassifier c;
  c.vocab = cp.header.at("vocab").get<std::size_t>();
  c.embed = cp.header.at("embed").get<std::size_t>();
  c.feature_maps = cp.header.at("feature_maps").get<std::size_t>();
  c.dropout = cp.header.at("dropout").get<double>();
  c.vocab_hash = hash_from_hex(cp.header.at("vocab_hash"));
  c.widths = cp.header.at("widths").get<std::vector<std::size_t>>();
  c.embedding = Tensor::zeros({c.vocab, c.embed});
  for (std::size_t w : c.widths) {
    c.kernels.push_back(Tensor::zeros({c.feature_maps, w * c.embed}));
    c.kernel_bias.push_back(Tensor::zeros({c.feature_maps}));
  }
  c.w_head = Tensor::zeros({5, c.widths.size() * c.feature_maps});
  c.b_head = Tensor::zeros({5});
  c.for_each([&](const std::string& n, Tensor& t) { cp.restore(n, t); });
  return c;
}

}  // namespace meansum
