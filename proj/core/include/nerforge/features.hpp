#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "nerforge/corpus.hpp"

namespace nerforge {

// Orthographic shape of a token. The five surface categories feed a small
// trainable embedding; kPad marks padding positions only.
enum class CaseCategory : int {
  kAllCaps = 0,
  kUpperInitial = 1,
  kLowercase = 2,
  kMixedCaps = 3,
  kNoInfo = 4,
  kPad = 5,
};

constexpr int kNumCaseCategories = 6;  // 5 surface categories + pad

// Classifies a non-empty surface, considering ASCII letters only.
// Precedence: noinfo, allCaps, lowercase, upperInitial, mixedCaps.
CaseCategory case_of(const std::string& surface);

const char* case_name(CaseCategory c);

// Decodes UTF-8 into code points; bytes of invalid sequences come back
// as individual code points so no input can fail.
std::vector<uint32_t> decode_utf8(const std::string& s);

// Character-to-index map built from training surfaces, first-occurrence
// order. Index 0 is padding, index 1 unknown; real characters start at 2.
class CharVocab {
 public:
  static constexpr int kPadIndex = 0;
  static constexpr int kUnknownIndex = 1;

  CharVocab() = default;
  explicit CharVocab(std::vector<uint32_t> chars_in_order);

  int index_of(uint32_t code_point) const;
  int size() const { return static_cast<int>(chars_.size()); }        // distinct chars
  int table_rows() const { return static_cast<int>(chars_.size()) + 2; }
  const std::vector<uint32_t>& chars() const { return chars_; }

 private:
  std::vector<uint32_t> chars_;                 // by index - 2
  std::unordered_map<uint32_t, int> index_;
};

// Scans training surfaces in order and assigns indices >= 2 by first
// occurrence. Throws DataError for an empty dataset.
CharVocab build_char_vocab(const Dataset& data);

// Per-character indices, right-padded with 0 to max(len, min_len).
std::vector<int> encode_chars(const std::string& surface, const CharVocab& vocab,
                              int min_len);

}  // namespace nerforge
