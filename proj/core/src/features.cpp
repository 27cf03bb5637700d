#include "nerforge/features.hpp"

#include "nerforge/errors.hpp"

namespace nerforge {

namespace {

bool ascii_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool ascii_lower(char c) { return c >= 'a' && c <= 'z'; }
bool ascii_alpha(char c) { return ascii_upper(c) || ascii_lower(c); }

}  // namespace

CaseCategory case_of(const std::string& surface) {
  int letters = 0, uppers = 0, lowers = 0;
  for (char c : surface) {
    if (!ascii_alpha(c)) continue;
    ++letters;
    if (ascii_upper(c)) ++uppers;
    else ++lowers;
  }
  if (letters == 0) return CaseCategory::kNoInfo;
  if (uppers == letters) return CaseCategory::kAllCaps;
  if (lowers == letters) return CaseCategory::kLowercase;
  if (ascii_upper(surface.front())) {
    bool rest_lower = true;
    for (size_t i = 1; i < surface.size(); ++i) {
      if (ascii_alpha(surface[i]) && !ascii_lower(surface[i])) {
        rest_lower = false;
        break;
      }
    }
    if (rest_lower) return CaseCategory::kUpperInitial;
  }
  return CaseCategory::kMixedCaps;
}

const char* case_name(CaseCategory c) {
  switch (c) {
    case CaseCategory::kAllCaps: return "allCaps";
    case CaseCategory::kUpperInitial: return "upperInitial";
    case CaseCategory::kLowercase: return "lowercase";
    case CaseCategory::kMixedCaps: return "mixedCaps";
    case CaseCategory::kNoInfo: return "noinfo";
    case CaseCategory::kPad: return "pad";
  }
  return "?";
}

std::vector<uint32_t> decode_utf8(const std::string& s) {
  std::vector<uint32_t> out;
  out.reserve(s.size());
  size_t i = 0;
  const auto* b = reinterpret_cast<const unsigned char*>(s.data());
  while (i < s.size()) {
    unsigned char c = b[i];
    int extra;
    uint32_t cp;
    if (c < 0x80) { extra = 0; cp = c; }
    else if ((c & 0xe0) == 0xc0) { extra = 1; cp = c & 0x1f; }
    else if ((c & 0xf0) == 0xe0) { extra = 2; cp = c & 0x0f; }
    else if ((c & 0xf8) == 0xf0) { extra = 3; cp = c & 0x07; }
    else { out.push_back(c); ++i; continue; }
    if (i + static_cast<size_t>(extra) >= s.size()) {
      out.push_back(c);  // truncated sequence
      ++i;
      continue;
    }
    bool ok = true;
    uint32_t acc = cp;
    for (int k = 1; k <= extra; ++k) {
      unsigned char cc = b[i + static_cast<size_t>(k)];
      if ((cc & 0xc0) != 0x80) { ok = false; break; }
      acc = (acc << 6) | (cc & 0x3f);
    }
    if (!ok) {
      out.push_back(c);
      ++i;
      continue;
    }
    out.push_back(acc);
    i += static_cast<size_t>(extra) + 1;
  }
  return out;
}

CharVocab::CharVocab(std::vector<uint32_t> chars_in_order) : chars_(std::move(chars_in_order)) {
  for (int i = 0; i < static_cast<int>(chars_.size()); ++i) {
    index_.emplace(chars_[static_cast<size_t>(i)], i + 2);
  }
}

int CharVocab::index_of(uint32_t code_point) const {
  auto it = index_.find(code_point);
  return it == index_.end() ? kUnknownIndex : it->second;
}

CharVocab build_char_vocab(const Dataset& data) {
  if (data.sentences.empty()) throw DataError("cannot build char vocab from empty dataset");
  std::vector<uint32_t> order;
  std::unordered_map<uint32_t, int> seen;
  for (const auto& sent : data.sentences) {
    for (const auto& tok : sent.tokens) {
      for (uint32_t cp : decode_utf8(tok.surface)) {
        if (seen.emplace(cp, 1).second) order.push_back(cp);
      }
    }
  }
  return CharVocab(std::move(order));
}

std::vector<int> encode_chars(const std::string& surface, const CharVocab& vocab,
                              int min_len) {
  auto cps = decode_utf8(surface);
  size_t n = std::max(cps.size(), static_cast<size_t>(min_len));
  std::vector<int> out(n, CharVocab::kPadIndex);
  for (size_t i = 0; i < cps.size(); ++i) out[i] = vocab.index_of(cps[i]);
  return out;
}

}  // namespace nerforge
