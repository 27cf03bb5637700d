#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nerforge/corpus.hpp"

namespace nerforge {

struct LookupResult {
  std::span<const float> vec;
  bool found = false;
};

// Memory-resident map from surface word to a fixed-dimension vector.
// Immutable after load; concurrent lookups are safe. Vectors are stored
// as 32-bit floats in one contiguous block.
class EmbeddingStore {
 public:
  EmbeddingStore() = default;

  static EmbeddingStore build(std::string name, int dim,
                              const std::vector<std::pair<std::string, std::vector<float>>>& entries);

  // Exact match first, then lowercased surface, else the zero vector
  // with found=false. Returned spans stay valid for the store's lifetime
  // and must never be written through.
  LookupResult lookup(const std::string& surface) const;

  int dim() const { return dim_; }
  size_t vocab_size() const { return offsets_.size(); }
  const std::string& name() const { return name_; }

 private:
  friend EmbeddingStore load_text_embeddings(const std::string& path);

  std::string name_;
  int dim_ = 0;
  std::unordered_map<std::string, size_t> offsets_;  // word -> index into storage_
  std::vector<float> storage_;
  std::vector<float> zero_;
};

// Loads word2vec/GloVe-style text: `<word> <v1> ... <vd>` per line, with
// an optional `<count> <dim>` first line (detected when both tokens are
// numeric). Duplicate words keep the first occurrence. Throws DataError
// on dimension mismatches, unparseable floats, or an empty file.
EmbeddingStore load_text_embeddings(const std::string& path);

// Table-style coverage of one dataset split: token occurrences resolved
// by lookup() over total occurrences.
struct CoverageReport {
  std::string dataset_name;
  std::string split_name;
  long covered_tokens = 0;
  long total_tokens = 0;
  double ratio = 0.0;
};

CoverageReport coverage_report(const EmbeddingStore& store, const Dataset& data,
                               const std::string& dataset_name,
                               const std::string& split_name);

}  // namespace nerforge
