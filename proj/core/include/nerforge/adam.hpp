#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nerforge/tensor.hpp"

namespace nerforge::ad {

// First and second moment estimates, one pair per parameter, aligned by
// index with the parameter list handed to init().
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  void init(const std::vector<Param<T>*>& params) {
    t = 0;
    m.clear();
    v.clear();
    m.reserve(params.size());
    v.reserve(params.size());
    for (const Param<T>* p : params) {
      m.emplace_back(p->value.v.size(), T(0));
      v.emplace_back(p->value.v.size(), T(0));
    }
  }
};

struct AdamStepResult {
  bool applied = false;
  double grad_norm = 0.0;
};

// One Adam update over all parameters jointly. The gradient norm is the
// global L2 norm across every coordinate of every parameter; clipping
// rescales gradients before the moment updates. A non-finite norm skips
// the step entirely (moments and t untouched) and reports it.
template <typename T>
AdamStepResult adam_step(const std::vector<Param<T>*>& params, AdamState<T>& state, double lr,
                         double clip) {
  if (params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: state not initialized for this parameter list");
  }
  double sq = 0.0;
  for (const Param<T>* p : params) {
    for (T g : p->grad.v) {
      const double gd = static_cast<double>(g);
      sq += gd * gd;
    }
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) return {false, norm};

  double scale = 1.0;
  if (clip > 0.0 && norm > clip) scale = clip / norm;

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = *params[i];
    std::vector<T>& m = state.m[i];
    std::vector<T>& v = state.v[i];
    for (size_t j = 0; j < p.value.v.size(); ++j) {
      const double g = static_cast<double>(p.grad.v[j]) * scale;
      const double mj = state.beta1 * static_cast<double>(m[j]) + (1.0 - state.beta1) * g;
      const double vj = state.beta2 * static_cast<double>(v[j]) + (1.0 - state.beta2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mh = mj / bc1;
      const double vh = vj / bc2;
      p.value.v[j] = static_cast<T>(static_cast<double>(p.value.v[j]) -
                                    lr * mh / (std::sqrt(vh) + state.eps));
    }
  }
  return {true, norm};
}

}  // namespace nerforge::ad
