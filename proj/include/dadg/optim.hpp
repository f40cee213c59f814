#pragma once

#include <stdexcept>
#include <vector>

#include "dadg/tensor.hpp"

namespace dadg {

struct SgdOptions {
  double lr = 0.0;
  double momentum = 0.0;
  double weight_decay = 0.0;
};

// Momentum buffers, lazily sized to the first parameter list seen.
template <typename S>
struct SgdState {
  std::vector<std::vector<S>> buf;
};

// p -= lr * (momentum-buffered (grad + wd * p)). A zero lr leaves the
// parameters bitwise untouched and does not advance the buffers.
template <typename S>
void sgd_step(ParamList<S>& params, const ParamList<S>& grads, const SgdOptions& opt,
              SgdState<S>* state = nullptr) {
  if (params.size() != grads.size()) throw std::invalid_argument("sgd_step: size mismatch");
  if (opt.lr == 0.0) return;
  const bool use_momentum = opt.momentum != 0.0;
  if (use_momentum) {
    if (!state) throw std::invalid_argument("sgd_step: momentum requires state");
    if (state->buf.empty()) {
      state->buf.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) state->buf[i].assign(params[i].size(), S{});
    }
  }
  const S lr = from_double<S>(opt.lr);
  const S mom = from_double<S>(opt.momentum);
  const S wd = from_double<S>(opt.weight_decay);
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size())
      throw std::invalid_argument("sgd_step: shape mismatch for " + params[i].name);
    auto& p = params[i].data;
    const auto& g = grads[i].data;
    for (size_t j = 0; j < p.size(); ++j) {
      S u = g[j];
      if (opt.weight_decay != 0.0) u += wd * p[j];
      if (use_momentum) {
        auto& b = (*state).buf[i][j];
        b = mom * b + u;
        u = b;
      }
      p[j] -= lr * u;
    }
  }
}

}  // namespace dadg
