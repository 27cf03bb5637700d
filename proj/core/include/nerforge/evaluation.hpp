#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nerforge/corpus.hpp"

namespace nerforge {

struct TypeCounts {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Entity-level scores, micro-averaged over all types and sentences.
// Ratios are fractions in [0,1]; zero denominators yield 0.
struct EvalReport {
  int64_t tp = 0;
  int64_t fp = 0;
  int64_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::map<std::string, TypeCounts> per_type;
  double token_accuracy = 0.0;
};

// Exact-span scoring: a predicted span counts as a true positive only if
// start, end, and type all match a gold span. Predictions are repaired to
// valid BIO before chunking. O tokens contribute nothing.
EvalReport evaluate(const Dataset& gold, const std::vector<std::vector<std::string>>& predicted);

// Same contract as evaluate, computed by brute-force enumeration of every
// (start, end, type) triple per sentence. Exists to cross-check evaluate.
EvalReport evaluate_oracle(const Dataset& gold,
                           const std::vector<std::vector<std::string>>& predicted);

}  // namespace nerforge
