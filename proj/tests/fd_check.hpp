#pragma once

// Central finite-difference gradient oracle. Test-only; independent of the
// tape's backward pass, which is exactly what it exists to check.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "meansum/tape.hpp"
#include "meansum/tensor.hpp"

namespace fdcheck {

struct Result {
  double max_rel = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::string where;
};

// build must construct a fresh graph from the current contents of the given
// tensors (bound via tape.param) and return a scalar loss Var. It must be
// deterministic: any randomness inside must be re-seeded identically per call.
template <class BuildFn>
Result fd_check(std::vector<meansum::Tensor*> params, BuildFn&& build,
                double h = 1e-5) {
  using meansum::Tape;
  using meansum::Tensor;
  using meansum::Var;

  Tape tape;
  Var loss = build(tape);
  tape.backward(loss);
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Tensor* p : params) {
    const Tensor* g = tape.grad_of(p);
    analytic.push_back(g ? *g : Tensor::zeros(p->shape));
  }

  auto eval = [&]() {
    Tape t;
    return t.value(build(t))[0];
  };

  Result r;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      double orig = p[i];
      p[i] = orig + h;
      double lp = eval();
      p[i] = orig - h;
      double lm = eval();
      p[i] = orig;
      double fd = (lp - lm) / (2.0 * h);
      double an = analytic[pi][i];
      double denom = std::max({1e-5, std::abs(fd), std::abs(an)});
      double rel = std::abs(fd - an) / denom;
      if (rel > r.max_rel) {
        r.max_rel = rel;
        r.analytic = an;
        r.numeric = fd;
        r.where = "param " + std::to_string(pi) + " [" + std::to_string(i) + "]";
      }
    }
  }
  return r;
}

}  // namespace fdcheck
