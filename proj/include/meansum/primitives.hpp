#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "meansum/rng.hpp"
#include "meansum/tape.hpp"
#include "meansum/tensor.hpp"

namespace meansum {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kAdamEps = 1e-8;

// ---------------------------------------------------------------------------
// Multiplicative LSTM cell with layer normalization.
//
// m_t = (W_mx x_t) o (W_mh h_{t-1})
// [i f o g] = gates over [x_t; m_t], each pre-activation layer-normalized
// c_t = f o c_{t-1} + i o g
// h_t = o o tanh(LN(c_t))
// ---------------------------------------------------------------------------

struct MlstmParams {
  std::size_t hidden = 0;
  std::size_t embed = 0;
  Tensor w_mx;      // [n, e]
  Tensor w_mh;      // [n, n]
  Tensor w_gates;   // [4n, e+n], row blocks ordered i, f, o, g
  Tensor b_gates;   // [4n]
  Tensor ln_i_gain, ln_i_bias;
  Tensor ln_f_gain, ln_f_bias;
  Tensor ln_o_gain, ln_o_bias;
  Tensor ln_g_gain, ln_g_bias;
  Tensor ln_c_gain, ln_c_bias;

  static MlstmParams init(std::size_t n, std::size_t e, Rng& rng,
                          double scale = 0.08) {
    MlstmParams p;
    p.hidden = n;
    p.embed = e;
    auto uni = [&](std::initializer_list<std::size_t> dims) {
      Tensor t = Tensor::zeros(dims);
      for (double& v : t.data) v = rng.uniform(-scale, scale);
      return t;
    };
    p.w_mx = uni({n, e});
    p.w_mh = uni({n, n});
    p.w_gates = uni({4 * n, e + n});
    p.b_gates = Tensor::zeros({4 * n});
    for (std::size_t i = 0; i < n; ++i) p.b_gates[n + i] = 1.0;  // forget gate
    auto ones = [&] { return Tensor::full({n}, 1.0); };
    auto zer = [&] { return Tensor::zeros({n}); };
    p.ln_i_gain = ones(); p.ln_i_bias = zer();
    p.ln_f_gain = ones(); p.ln_f_bias = zer();
    p.ln_o_gain = ones(); p.ln_o_bias = zer();
    p.ln_g_gain = ones(); p.ln_g_bias = zer();
    p.ln_c_gain = ones(); p.ln_c_bias = zer();
    return p;
  }

  template <class F>
  void for_each(const std::string& prefix, F&& f) {
    f(prefix + ".w_mx", w_mx);
    f(prefix + ".w_mh", w_mh);
    f(prefix + ".w_gates", w_gates);
    f(prefix + ".b_gates", b_gates);
    f(prefix + ".ln_i_gain", ln_i_gain); f(prefix + ".ln_i_bias", ln_i_bias);
    f(prefix + ".ln_f_gain", ln_f_gain); f(prefix + ".ln_f_bias", ln_f_bias);
    f(prefix + ".ln_o_gain", ln_o_gain); f(prefix + ".ln_o_bias", ln_o_bias);
    f(prefix + ".ln_g_gain", ln_g_gain); f(prefix + ".ln_g_bias", ln_g_bias);
    f(prefix + ".ln_c_gain", ln_c_gain); f(prefix + ".ln_c_bias", ln_c_bias);
  }
};

// Tape-bound view of the cell parameters. Binding the same MlstmParams twice
// on one tape reuses the same nodes, which is what weight tying needs.
struct MlstmVars {
  std::size_t n = 0, e = 0;
  Var w_mx, w_mh, w_gates, b_gates;
  Var ln_i_gain, ln_i_bias, ln_f_gain, ln_f_bias;
  Var ln_o_gain, ln_o_bias, ln_g_gain, ln_g_bias;
  Var ln_c_gain, ln_c_bias;
};

inline MlstmVars bind(Tape& tape, MlstmParams& p) {
  MlstmVars v;
  v.n = p.hidden;
  v.e = p.embed;
  v.w_mx = tape.param(p.w_mx);
  v.w_mh = tape.param(p.w_mh);
  v.w_gates = tape.param(p.w_gates);
  v.b_gates = tape.param(p.b_gates);
  v.ln_i_gain = tape.param(p.ln_i_gain); v.ln_i_bias = tape.param(p.ln_i_bias);
  v.ln_f_gain = tape.param(p.ln_f_gain); v.ln_f_bias = tape.param(p.ln_f_bias);
  v.ln_o_gain = tape.param(p.ln_o_gain); v.ln_o_bias = tape.param(p.ln_o_bias);
  v.ln_g_gain = tape.param(p.ln_g_gain); v.ln_g_bias = tape.param(p.ln_g_bias);
  v.ln_c_gain = tape.param(p.ln_c_gain); v.ln_c_bias = tape.param(p.ln_c_bias);
  return v;
}

struct StateVars {
  Var h, c;
};

inline StateVars zero_state(Tape& tape, std::size_t n) {
  return {tape.leaf(Tensor::zeros({n})), tape.leaf(Tensor::zeros({n}))};
}

inline StateVars mlstm_step(Tape& tape, const MlstmVars& p, Var x_emb,
                            StateVars prev, double ln_eps = kLayerNormEps) {
  std::size_t n = p.n;
  Var m = tape.mul(tape.matvec(p.w_mx, x_emb), tape.matvec(p.w_mh, prev.h));
  Var xm = tape.concat(x_emb, m);
  Var pre = tape.add(tape.matvec(p.w_gates, xm), p.b_gates);
  Var gi = tape.sigmoid(tape.layer_norm(tape.slice(pre, 0, n), p.ln_i_gain, p.ln_i_bias, ln_eps));
  Var gf = tape.sigmoid(tape.layer_norm(tape.slice(pre, n, n), p.ln_f_gain, p.ln_f_bias, ln_eps));
  Var go = tape.sigmoid(tape.layer_norm(tape.slice(pre, 2 * n, n), p.ln_o_gain, p.ln_o_bias, ln_eps));
  Var gg = tape.tanh(tape.layer_norm(tape.slice(pre, 3 * n, n), p.ln_g_gain, p.ln_g_bias, ln_eps));
  Var c = tape.add(tape.mul(gf, prev.c), tape.mul(gi, gg));
  Var h = tape.mul(go, tape.tanh(tape.layer_norm(c, p.ln_c_gain, p.ln_c_bias, ln_eps)));
  return {h, c};
}

// ---------------------------------------------------------------------------
// Gumbel-Softmax straight-through sampler
// ---------------------------------------------------------------------------

struct GumbelConfig {
  double temperature = 2.0;
};

struct GumbelSample {
  Var soft;          // simplex vector over the vocabulary, on tape
  std::size_t hard;  // argmax index (ties break toward the lowest index)
};

inline std::size_t argmax_lowest(const Tensor& t) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    if (t[i] > t[best]) best = i;
  }
  return best;
}

inline Tensor one_hot(std::size_t n, std::size_t idx) {
  Tensor t = Tensor::zeros({n});
  t[idx] = 1.0;
  return t;
}

// Relaxed sample with explicit noise, used when the noise must be held fixed
// (gradient checks). soft = softmax((logits + noise) / tau).
inline GumbelSample gumbel_softmax_st(Tape& tape, Var logits, double tau,
                                      const Tensor& noise) {
  if (tau <= 0.0) throw std::invalid_argument("gumbel_softmax_st: tau must be > 0");
  Var soft = tape.softmax(tape.scale(tape.add(logits, tape.leaf(noise)), 1.0 / tau));
  return {soft, argmax_lowest(tape.value(soft))};
}

inline GumbelSample gumbel_softmax_st(Tape& tape, Var logits,
                                      const GumbelConfig& cfg, Rng& rng) {
  Tensor noise = Tensor::zeros({tape.value(logits).size()});
  for (double& v : noise.data) v = rng.gumbel();
  return gumbel_softmax_st(tape, logits, cfg.temperature, noise);
}

// ---------------------------------------------------------------------------
// Sequence cross-entropy
// ---------------------------------------------------------------------------

// Mean of -log p(target) over unmasked positions. Throws if every position is
// masked out.
inline Var masked_mean_xent(Tape& tape, const std::vector<Var>& logits,
                            const std::vector<std::size_t>& targets,
                            const std::vector<bool>& mask) {
  if (logits.size() != targets.size() || logits.size() != mask.size()) {
    throw std::invalid_argument("masked_mean_xent: length mismatch");
  }
  std::vector<Var> terms;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) terms.push_back(tape.xent(logits[i], targets[i]));
  }
  if (terms.empty()) throw std::invalid_argument("masked_mean_xent: all positions masked");
  return tape.scale(tape.add_n(std::move(terms)), 1.0 / double(terms.size()));
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

// One bias-corrected Adam step on a single tensor. step is 1-based.
inline void adam_update(Tensor& param, const Tensor& grad, Tensor& m, Tensor& v,
                        std::int64_t step, double lr, double beta1, double beta2,
                        double eps) {
  if (!param.same_shape(grad)) throw std::invalid_argument("adam_update: shape mismatch");
  if (!grad.all_finite()) throw std::runtime_error("adam_update: non-finite gradient");
  if (m.size() != param.size()) m = Tensor::zeros(param.shape);
  if (v.size() != param.size()) v = Tensor::zeros(param.shape);
  double bc1 = 1.0 - std::pow(beta1, double(step));
  double bc2 = 1.0 - std::pow(beta2, double(step));
  for (std::size_t i = 0; i < param.size(); ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = kAdamEps;
  double clip_norm = 5.0;  // global gradient-norm clip; <= 0 disables
};

// Owns moment state for a fixed, ordered list of parameter tensors.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor*> params, AdamConfig cfg)
      : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
  }

  // Pulls gradients off a backpropagated tape and applies one update.
  // Parameters that did not participate in this tape are left untouched.
  void step(const Tape& tape) {
    std::vector<const Tensor*> grads(params_.size(), nullptr);
    double sq = 0.0;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      grads[i] = tape.grad_of(params_[i]);
      if (grads[i]) {
        if (!grads[i]->all_finite()) {
          throw std::runtime_error("AdamOptimizer: non-finite gradient");
        }
        sq += squared_norm(*grads[i]);
      }
    }
    double scale = 1.0;
    double norm = std::sqrt(sq);
    if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) scale = cfg_.clip_norm / norm;
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (!grads[i]) continue;
      Tensor g = *grads[i];
      if (scale != 1.0) {
        for (double& x : g.data) x *= scale;
      }
      adam_update(*params_[i], g, m_[i], v_[i], t_, cfg_.lr, cfg_.beta1,
                  cfg_.beta2, cfg_.eps);
    }
  }

  std::int64_t steps_taken() const { return t_; }

 private:
  std::vector<Tensor*> params_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
  AdamConfig cfg_;
};

}  // namespace meansum
