#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <unordered_map>
#include <utility>
#include <vector>

#include "meansum/rng.hpp"
#include "meansum/tensor.hpp"

namespace meansum {

// Counters for degenerate-but-tolerated numeric events.
struct Diagnostics {
  std::uint64_t zero_norm_cosine = 0;
};
inline Diagnostics& diagnostics() {
  static Diagnostics d;
  return d;
}

struct Var {
  std::int32_t id = -1;
  bool ok() const { return id >= 0; }
};

// Reverse-mode tape. One tape is built per forward pass (a training step or
// an evaluation), then discarded. Nodes are appended in topological order, so
// backward() is a reverse sweep. Ops are tensor-granular with hand-written
// adjoints; every differentiable op has finite-difference coverage in the
// test suite.
class Tape {
 public:
  Var leaf(Tensor value) {
    check_finite(value, "leaf");
    return push(std::move(value), nullptr);
  }

  // Gradient-tracked leaf. The tensor is copied onto the tape; gradients are
  // looked up afterwards by the tensor's address. Repeated calls with the
  // same tensor return the same node so tied parameters accumulate naturally.
  Var param(Tensor& t) {
    auto it = param_index_.find(&t);
    if (it != param_index_.end()) return Var{it->second};
    check_finite(t, "param");
    Var v = push(t, nullptr);
    nodes_[v.id].requires_grad = true;
    param_index_.emplace(&t, v.id);
    params_.emplace_back(&t, v.id);
    return v;
  }

  const Tensor& value(Var v) const { return nodes_.at(check(v)).value; }
  const Tensor& grad(Var v) const {
    if (!ran_backward_) throw std::logic_error("Tape::grad before backward");
    return nodes_.at(check(v)).grad;
  }

  std::size_t node_count() const { return nodes_.size(); }

  // ---- elementwise ----

  Var add(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += vb[i];
    return push(std::move(out), [a, b](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      t.accum(a, g, 1.0);
      t.accum(b, g, 1.0);
    });
  }

  Var sub(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "sub: shape mismatch");
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= vb[i];
    return push(std::move(out), [a, b](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      t.accum(a, g, 1.0);
      t.accum(b, g, -1.0);
    });
  }

  Var mul(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb), "mul: shape mismatch");
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(std::move(out), [a, b](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.nodes_[a.id].grad;
      Tensor& gb = t.nodes_[b.id].grad;
      const Tensor& va = t.nodes_[a.id].value;
      const Tensor& vb = t.nodes_[b.id].value;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * vb[i];
        gb[i] += g[i] * va[i];
      }
    });
  }

  Var scale(Var a, double k) {
    Tensor out = value(a);
    for (double& v : out.data) v *= k;
    return push(std::move(out), [a, k](Tape& t, std::int32_t self) {
      t.accum(a, t.nodes_[self].grad, k);
    });
  }

  Var add_n(std::vector<Var> xs) {
    require(!xs.empty(), "add_n: empty");
    Tensor out = value(xs[0]);
    for (std::size_t j = 1; j < xs.size(); ++j) {
      const Tensor& v = value(xs[j]);
      require(v.same_shape(out), "add_n: shape mismatch");
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += v[i];
    }
    return push(std::move(out), [xs = std::move(xs)](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      for (Var x : xs) t.accum(x, g, 1.0);
    });
  }

  Var tanh(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = std::tanh(v);
    return push(std::move(out), [a](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
    });
  }

  Var sigmoid(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) {
      v = v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                 : std::exp(v) / (1.0 + std::exp(v));
    }
    return push(std::move(out), [a](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
    });
  }

  Var relu(Var a) {
    Tensor out = value(a);
    for (double& v : out.data) v = v > 0 ? v : 0.0;
    return push(std::move(out), [a](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (y[i] > 0) ga[i] += g[i];
      }
    });
  }

  // ---- shape ----

  Var concat(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.rank() == 1 && vb.rank() == 1, "concat: vectors only");
    Tensor out = Tensor::zeros({va.size() + vb.size()});
    std::copy(va.data.begin(), va.data.end(), out.data.begin());
    std::copy(vb.data.begin(), vb.data.end(), out.data.begin() + va.size());
    std::size_t na = va.size();
    return push(std::move(out), [a, b, na](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.nodes_[a.id].grad;
      Tensor& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
    });
  }

  Var slice(Var a, std::size_t offset, std::size_t len) {
    const Tensor& va = value(a);
    require(va.rank() == 1 && offset + len <= va.size(), "slice: out of range");
    Tensor out = Tensor::zeros({len});
    std::copy(va.data.begin() + offset, va.data.begin() + offset + len, out.data.begin());
    return push(std::move(out), [a, offset, len](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < len; ++i) ga[offset + i] += g[i];
    });
  }

  // ---- linear algebra ----

  // y = W x, W:[m,n], x:[n]
  Var matvec(Var w, Var x) {
    const Tensor &vw = value(w), &vx = value(x);
    require(vw.rank() == 2 && vx.rank() == 1 && vw.cols() == vx.size(),
            "matvec: " + vw.shape_str() + " * " + vx.shape_str());
    std::size_t m = vw.rows(), n = vw.cols();
    Tensor out = Tensor::zeros({m});
    for (std::size_t i = 0; i < m; ++i) {
      const double* wr = vw.data.data() + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += wr[j] * vx[j];
      out[i] = s;
    }
    return push(std::move(out), [w, x, m, n](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& vw = t.nodes_[w.id].value;
      const Tensor& vx = t.nodes_[x.id].value;
      Tensor& gw = t.nodes_[w.id].grad;
      Tensor& gx = t.nodes_[x.id].grad;
      for (std::size_t i = 0; i < m; ++i) {
        double gi = g[i];
        if (gi == 0.0) continue;
        double* gwr = gw.data.data() + i * n;
        const double* wr = vw.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
          gwr[j] += gi * vx[j];
          gx[j] += gi * wr[j];
        }
      }
    });
  }

  // ---- embedding ----

  Var row(Var matrix, std::size_t r) {
    const Tensor& vm = value(matrix);
    require(vm.rank() == 2 && r < vm.rows(), "row: index out of range");
    std::size_t c = vm.cols();
    Tensor out = Tensor::zeros({c});
    std::copy(vm.data.begin() + r * c, vm.data.begin() + (r + 1) * c, out.data.begin());
    return push(std::move(out), [matrix, r, c](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& gm = t.nodes_[matrix.id].grad;
      for (std::size_t i = 0; i < c; ++i) gm[r * c + i] += g[i];
    });
  }

  // Stack of embedding rows: [T, e]
  Var rows(Var matrix, std::vector<std::size_t> ids) {
    const Tensor& vm = value(matrix);
    require(vm.rank() == 2, "rows: matrix expected");
    std::size_t c = vm.cols();
    Tensor out = Tensor::zeros({ids.size(), c});
    for (std::size_t t = 0; t < ids.size(); ++t) {
      require(ids[t] < vm.rows(), "rows: index out of range");
      std::copy(vm.data.begin() + ids[t] * c, vm.data.begin() + (ids[t] + 1) * c,
                out.data.begin() + t * c);
    }
    return push(std::move(out), [matrix, ids = std::move(ids), c](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& gm = t.nodes_[matrix.id].grad;
      for (std::size_t r = 0; r < ids.size(); ++r) {
        for (std::size_t i = 0; i < c; ++i) gm[ids[r] * c + i] += g[r * c + i];
      }
    });
  }

  // Straight-through embedding: forward is the hard token's embedding row;
  // backward treats the output as soft-weighted mixture of all rows, so the
  // relaxed distribution receives gradient while the emitted token stays
  // discrete.
  Var st_embed(Var matrix, Var soft, std::size_t hard) {
    const Tensor& vm = value(matrix);
    const Tensor& vs = value(soft);
    require(vm.rank() == 2 && vs.rank() == 1 && vs.size() == vm.rows(),
            "st_embed: shape mismatch");
    require(hard < vm.rows(), "st_embed: hard index out of range");
    std::size_t c = vm.cols();
    Tensor out = Tensor::zeros({c});
    std::copy(vm.data.begin() + hard * c, vm.data.begin() + (hard + 1) * c, out.data.begin());
    return push(std::move(out), [matrix, soft, hard, c](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& vm = t.nodes_[matrix.id].value;
      Tensor& gm = t.nodes_[matrix.id].grad;
      Tensor& gs = t.nodes_[soft.id].grad;
      for (std::size_t i = 0; i < c; ++i) gm[hard * c + i] += g[i];
      std::size_t v = vm.rows();
      for (std::size_t r = 0; r < v; ++r) {
        const double* mr = vm.data.data() + r * c;
        double s = 0.0;
        for (std::size_t i = 0; i < c; ++i) s += mr[i] * g[i];
        gs[r] += s;
      }
    });
  }

  // ---- normalization / losses ----

  Var softmax(Var a) {
    const Tensor& va = value(a);
    require(va.rank() == 1 && va.size() > 0, "softmax: vector expected");
    Tensor out = va;
    double m = *std::max_element(out.data.begin(), out.data.end());
    double z = 0.0;
    for (double& v : out.data) {
      v = std::exp(v - m);
      z += v;
    }
    for (double& v : out.data) v /= z;
    return push(std::move(out), [a](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& y = t.nodes_[self].value;
      Tensor& ga = t.nodes_[a.id].grad;
      double dot = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - dot);
    });
  }

  Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor &vx = value(x), &vg = value(gain), &vb = value(bias);
    require(vx.rank() == 1 && vx.size() >= 1, "layer_norm: vector expected");
    require(vx.same_shape(vg) && vx.same_shape(vb), "layer_norm: shape mismatch");
    std::size_t n = vx.size();
    double mu = 0.0;
    for (double v : vx.data) mu += v;
    mu /= double(n);
    double var = 0.0;
    for (double v : vx.data) var += (v - mu) * (v - mu);
    var /= double(n);
    double sigma = std::sqrt(var + eps);
    Tensor out = Tensor::zeros({n});
    for (std::size_t i = 0; i < n; ++i) out[i] = vg[i] * (vx[i] - mu) / sigma + vb[i];
    return push(std::move(out), [x, gain, bias, mu, sigma, n](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& vx = t.nodes_[x.id].value;
      const Tensor& vg = t.nodes_[gain.id].value;
      Tensor& gx = t.nodes_[x.id].grad;
      Tensor& gg = t.nodes_[gain.id].grad;
      Tensor& gb = t.nodes_[bias.id].grad;
      double mean_t = 0.0, mean_txh = 0.0;
      std::vector<double> xhat(n), tt(n);
      for (std::size_t i = 0; i < n; ++i) {
        xhat[i] = (vx[i] - mu) / sigma;
        tt[i] = g[i] * vg[i];
        mean_t += tt[i];
        mean_txh += tt[i] * xhat[i];
        gg[i] += g[i] * xhat[i];
        gb[i] += g[i];
      }
      mean_t /= double(n);
      mean_txh /= double(n);
      for (std::size_t i = 0; i < n; ++i) {
        gx[i] += (tt[i] - mean_t - xhat[i] * mean_txh) / sigma;
      }
    });
  }

  // -log softmax(logits)[target], numerically stable
  Var xent(Var logits, std::size_t target) {
    const Tensor& vl = value(logits);
    require(vl.rank() == 1 && target < vl.size(), "xent: bad target");
    double m = *std::max_element(vl.data.begin(), vl.data.end());
    double z = 0.0;
    for (double v : vl.data) z += std::exp(v - m);
    double loss = std::log(z) + m - vl[target];
    return push(Tensor::scalar(loss), [logits, target, m, z](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      const Tensor& vl = t.nodes_[logits.id].value;
      Tensor& gl = t.nodes_[logits.id].grad;
      for (std::size_t i = 0; i < vl.size(); ++i) {
        double p = std::exp(vl[i] - m) / z;
        gl[i] += g * (p - (i == target ? 1.0 : 0.0));
      }
    });
  }

  // 1 - cos(a, b). A zero-norm side yields distance 1 with zero gradients and
  // bumps a diagnostics counter; this keeps degenerate encoders trainable
  // instead of producing NaN.
  Var cosine_distance(Var a, Var b) {
    const Tensor &va = value(a), &vb = value(b);
    require(va.same_shape(vb) && va.rank() == 1, "cosine_distance: shape mismatch");
    double na2 = squared_norm(va), nb2 = squared_norm(vb);
    if (na2 == 0.0 || nb2 == 0.0) {
      ++diagnostics().zero_norm_cosine;
      return push(Tensor::scalar(1.0), nullptr);
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    double dot = 0.0;
    for (std::size_t i = 0; i < va.size(); ++i) dot += va[i] * vb[i];
    double sim = dot / (na * nb);
    return push(Tensor::scalar(1.0 - sim), [a, b, na, nb, sim](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      const Tensor& va = t.nodes_[a.id].value;
      const Tensor& vb = t.nodes_[b.id].value;
      Tensor& ga = t.nodes_[a.id].grad;
      Tensor& gb = t.nodes_[b.id].grad;
      for (std::size_t i = 0; i < va.size(); ++i) {
        ga[i] += g * (sim * va[i] / (na * na) - vb[i] / (na * nb));
        gb[i] += g * (sim * vb[i] / (nb * nb) - va[i] / (na * nb));
      }
    });
  }

  Var sum(Var a) {
    const Tensor& va = value(a);
    double s = 0.0;
    for (double v : va.data) s += v;
    return push(Tensor::scalar(s), [a](Tape& t, std::int32_t self) {
      double g = t.nodes_[self].grad[0];
      Tensor& ga = t.nodes_[a.id].grad;
      for (double& v : ga.data) v += g;
    });
  }

  Var mean(Var a) { return scale(sum(a), 1.0 / double(value(a).size())); }

  // Elementwise mean of k same-shaped vectors. Addends are sorted by value
  // before summation so the result is bitwise invariant under permutation of
  // the inputs; greedy decoding from a mean latent relies on this.
  Var mean_stack(std::vector<Var> xs) {
    require(!xs.empty(), "mean_stack: empty");
    const Tensor& first = value(xs[0]);
    std::size_t n = first.size(), k = xs.size();
    for (Var x : xs) require(value(x).same_shape(first), "mean_stack: shape mismatch");
    Tensor out = Tensor::zeros(first.shape);
    std::vector<double> buf(k);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < k; ++j) buf[j] = value(xs[j])[i];
      std::sort(buf.begin(), buf.end());
      double s = 0.0;
      for (double v : buf) s += v;
      out[i] = s / double(k);
    }
    return push(std::move(out), [xs = std::move(xs), k](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      for (Var x : xs) t.accum(x, g, 1.0 / double(k));
    });
  }

  // ---- classifier ops ----

  // 1-d convolution bank over a [T, e] embedding matrix.
  // kernels: [F, width*e], bias: [F] -> features [F, T-width+1]
  Var conv1d(Var emb, Var kernels, Var bias, std::size_t width) {
    const Tensor &ve = value(emb), &vk = value(kernels), &vb = value(bias);
    require(ve.rank() == 2 && vk.rank() == 2 && vb.rank() == 1, "conv1d: bad ranks");
    std::size_t T = ve.rows(), e = ve.cols(), F = vk.rows();
    require(vk.cols() == width * e, "conv1d: kernel width mismatch");
    require(vb.size() == F, "conv1d: bias mismatch");
    require(T >= width, "conv1d: sequence shorter than filter");
    std::size_t To = T - width + 1;
    Tensor out = Tensor::zeros({F, To});
    for (std::size_t f = 0; f < F; ++f) {
      const double* kr = vk.data.data() + f * width * e;
      for (std::size_t t = 0; t < To; ++t) {
        double s = vb[f];
        const double* er = ve.data.data() + t * e;
        for (std::size_t i = 0; i < width * e; ++i) s += kr[i] * er[i];
        out.at(f, t) = s;
      }
    }
    return push(std::move(out), [emb, kernels, bias, width, T, e, F, To](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      const Tensor& ve = t.nodes_[emb.id].value;
      const Tensor& vk = t.nodes_[kernels.id].value;
      Tensor& ge = t.nodes_[emb.id].grad;
      Tensor& gk = t.nodes_[kernels.id].grad;
      Tensor& gb = t.nodes_[bias.id].grad;
      for (std::size_t f = 0; f < F; ++f) {
        const double* kr = vk.data.data() + f * width * e;
        double* gkr = gk.data.data() + f * width * e;
        for (std::size_t tt = 0; tt < To; ++tt) {
          double gv = g[f * To + tt];
          if (gv == 0.0) continue;
          gb[f] += gv;
          const double* er = ve.data.data() + tt * e;
          double* ger = ge.data.data() + tt * e;
          for (std::size_t i = 0; i < width * e; ++i) {
            gkr[i] += gv * er[i];
            ger[i] += gv * kr[i];
          }
        }
      }
    });
  }

  // Max over the time axis of [F, T] -> [F]. Ties break toward the earliest
  // position so evaluation is deterministic.
  Var max_over_time(Var feat) {
    const Tensor& vf = value(feat);
    require(vf.rank() == 2 && vf.cols() >= 1, "max_over_time: bad shape");
    std::size_t F = vf.rows(), T = vf.cols();
    Tensor out = Tensor::zeros({F});
    std::vector<std::size_t> arg(F, 0);
    for (std::size_t f = 0; f < F; ++f) {
      double best = vf.at(f, 0);
      std::size_t bi = 0;
      for (std::size_t t = 1; t < T; ++t) {
        if (vf.at(f, t) > best) {
          best = vf.at(f, t);
          bi = t;
        }
      }
      out[f] = best;
      arg[f] = bi;
    }
    return push(std::move(out), [feat, arg = std::move(arg), T](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& gf = t.nodes_[feat.id].grad;
      for (std::size_t f = 0; f < g.size(); ++f) gf[f * T + arg[f]] += g[f];
    });
  }

  // Inverted dropout with an explicit rng stream; pass rate 0 for identity.
  Var dropout(Var a, double rate, Rng& rng) {
    require(rate >= 0.0 && rate < 1.0, "dropout: rate in [0,1)");
    if (rate == 0.0) return a;
    const Tensor& va = value(a);
    Tensor mask = Tensor::zeros(va.shape);
    double keep = 1.0 - rate;
    for (double& m : mask.data) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
    Tensor out = va;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
    return push(std::move(out), [a, mask = std::move(mask)](Tape& t, std::int32_t self) {
      const Tensor& g = t.nodes_[self].grad;
      Tensor& ga = t.nodes_[a.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
  }

  // ---- backward ----

  void backward(Var loss) {
    const Tensor& lv = value(loss);
    require(lv.size() == 1, "backward: loss must be scalar");
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[loss.id].grad[0] = 1.0;
    ran_backward_ = true;
    for (std::int32_t i = loss.id; i >= 0; --i) {
      if (nodes_[i].back) nodes_[i].back(*this, i);
    }
  }

  // Gradient for a registered parameter tensor, or nullptr if it was never
  // bound on this tape.
  const Tensor* grad_of(const Tensor* p) const {
    auto it = param_index_.find(p);
    if (it == param_index_.end()) return nullptr;
    if (!ran_backward_) throw std::logic_error("Tape::grad_of before backward");
    return &nodes_[it->second].grad;
  }

  template <class F>
  void for_each_param(F&& f) const {
    for (const auto& [ptr, id] : params_) f(ptr, nodes_[id].grad);
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&, std::int32_t)> back;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::vector<std::pair<Tensor*, std::int32_t>> params_;
  std::unordered_map<const Tensor*, std::int32_t> param_index_;
  bool ran_backward_ = false;

  std::int32_t check(Var v) const {
    if (!v.ok() || std::size_t(v.id) >= nodes_.size()) {
      throw std::logic_error("Tape: invalid Var");
    }
    return v.id;
  }

  static void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument("Tape: " + msg);
  }

  static void check_finite(const Tensor& t, const char* where) {
    if (!t.all_finite()) {
      throw std::invalid_argument(std::string("Tape: non-finite input at ") + where);
    }
  }

  void accum(Var v, const Tensor& g, double k) {
    Tensor& gv = nodes_[v.id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) gv[i] += k * g[i];
  }

  Var push(Tensor value, std::function<void(Tape&, std::int32_t)> back) {
    Node n;
    n.value = std::move(value);
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{std::int32_t(nodes_.size() - 1)};
  }

  friend struct TapeTestAccess;
};

}  // namespace meansum
