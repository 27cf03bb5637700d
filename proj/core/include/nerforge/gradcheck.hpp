#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nerforge/tape.hpp"
#include "nerforge/tensor.hpp"

namespace nerforge::ad {

struct GradCheckOffender {
  std::string tensor;
  int64_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  bool pass = false;
  int64_t checked = 0;
  GradCheckOffender worst;                  // largest rel_err seen, pass or fail
  std::vector<GradCheckOffender> offenders; // coordinates over tolerance

  std::string summary() const;
};

// Rebuilds the loss graph from the parameters' current values. Must be
// deterministic (no dropout) so repeated builds differ only through the
// perturbed coordinate.
using LossBuilder = std::function<Value<double>(Tape<double>&)>;

// Compares backward() gradients against central finite differences
// (loss(x+h) - loss(x-h)) / 2h at sampled coordinates of every parameter,
// in 64-bit arithmetic. rel_err = |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport grad_check(const std::vector<Param<double>*>& params, const LossBuilder& build,
                           double tol, int samples_per_tensor, uint64_t seed, double h = 1e-5);

}  // namespace nerforge::ad

namespace nerforge {

// End-to-end check of the full tagger graph at toy size: word_dim 5,
// state 4, tags {B-X, I-X, O}, one 3-token sentence, dropout off.
ad::GradCheckReport grad_check_toy_tagger(double tol = 1e-4, uint64_t seed = 42);

}  // namespace nerforge
