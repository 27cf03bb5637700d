#pragma once

#include <stdexcept>
#include <string>

namespace nerforge {

// Problems with input files or data contents: missing paths, malformed
// CoNLL or vector files, misaligned predictions. The CLI maps these to
// exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite losses or failed numeric checks. The CLI maps these to
// exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace nerforge
