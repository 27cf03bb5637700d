#include "nerforge/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>

#include "nerforge/errors.hpp"

namespace nerforge {

namespace {

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

bool parse_float(std::string_view tok, float& out) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool is_numeric_token(std::string_view tok) {
  float ignored;
  return parse_float(tok, ignored);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> toks;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) toks.push_back(line.substr(i, j - i));
    i = j;
  }
  return toks;
}

}  // namespace

EmbeddingStore EmbeddingStore::build(
    std::string name, int dim,
    const std::vector<std::pair<std::string, std::vector<float>>>& entries) {
  if (dim <= 0) throw DataError("embedding dimension must be positive");
  if (entries.empty()) throw DataError("embedding store needs at least one vector");
  EmbeddingStore store;
  store.name_ = std::move(name);
  store.dim_ = dim;
  store.zero_.assign(static_cast<size_t>(dim), 0.0f);
  store.storage_.reserve(entries.size() * static_cast<size_t>(dim));
  for (const auto& [word, vec] : entries) {
    if (static_cast<int>(vec.size()) != dim) {
      throw DataError("vector for '" + word + "' has wrong dimension");
    }
    auto [it, inserted] = store.offsets_.emplace(word, store.storage_.size());
    if (!inserted) continue;  // first occurrence wins
    store.storage_.insert(store.storage_.end(), vec.begin(), vec.end());
  }
  return store;
}

LookupResult EmbeddingStore::lookup(const std::string& surface) const {
  auto it = offsets_.find(surface);
  if (it == offsets_.end()) it = offsets_.find(ascii_lower(surface));
  if (it == offsets_.end()) {
    return {std::span<const float>(zero_.data(), zero_.size()), false};
  }
  return {std::span<const float>(storage_.data() + it->second, static_cast<size_t>(dim_)), true};
}

EmbeddingStore load_text_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open embeddings file: " + path);

  EmbeddingStore store;
  store.name_ = path;
  size_t slash = store.name_.find_last_of("/\\");
  if (slash != std::string::npos) store.name_ = store.name_.substr(slash + 1);

  std::string line;
  size_t line_no = 0;
  bool first_content_line = true;
  std::vector<float> vec;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto toks = split_ws(line);
    if (toks.empty()) continue;

    if (first_content_line) {
      first_content_line = false;
      // A 2-token all-numeric first line is a word2vec header.
      if (toks.size() == 2 && is_numeric_token(toks[0]) && is_numeric_token(toks[1])) {
        continue;
      }
    }

    if (toks.size() < 2) {
      throw DataError(path + ":" + std::to_string(line_no) + ": expected word and vector");
    }
    int dim = static_cast<int>(toks.size()) - 1;
    if (store.dim_ == 0) {
      store.dim_ = dim;
      store.zero_.assign(static_cast<size_t>(dim), 0.0f);
    } else if (dim != store.dim_) {
      throw DataError(path + ":" + std::to_string(line_no) + ": dimension mismatch (got " +
                      std::to_string(dim) + ", expected " + std::to_string(store.dim_) + ")");
    }

    vec.resize(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      if (!parse_float(toks[static_cast<size_t>(i) + 1], vec[static_cast<size_t>(i)])) {
        throw DataError(path + ":" + std::to_string(line_no) + ": cannot parse float '" +
                        std::string(toks[static_cast<size_t>(i) + 1]) + "'");
      }
    }
    std::string word(toks[0]);
    auto [it, inserted] = store.offsets_.emplace(std::move(word), store.storage_.size());
    if (!inserted) continue;
    store.storage_.insert(store.storage_.end(), vec.begin(), vec.end());
  }
  if (in.bad()) throw DataError("I/O error while reading " + path);
  if (store.offsets_.empty()) throw DataError("no vectors in " + path);
  return store;
}

CoverageReport coverage_report(const EmbeddingStore& store, const Dataset& data,
                               const std::string& dataset_name,
                               const std::string& split_name) {
  if (data.sentences.empty()) throw DataError("coverage over empty dataset");
  CoverageReport rep;
  rep.dataset_name = dataset_name;
  rep.split_name = split_name;
  for (const auto& sent : data.sentences) {
    for (const auto& tok : sent.tokens) {
      ++rep.total_tokens;
      if (store.lookup(tok.surface).found) ++rep.covered_tokens;
    }
  }
  rep.ratio = static_cast<double>(rep.covered_tokens) / static_cast<double>(rep.total_tokens);
  return rep;
}

}  // namespace nerforge
