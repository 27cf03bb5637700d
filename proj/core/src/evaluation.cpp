#include "nerforge/evaluation.hpp"

#include <algorithm>
#include <set>

#include "nerforge/errors.hpp"

namespace nerforge {

namespace {

void check_alignment(const Dataset& gold, const std::vector<std::vector<std::string>>& predicted) {
  if (predicted.size() != gold.sentences.size()) {
    throw DataError("evaluate: prediction count " + std::to_string(predicted.size()) +
                    " does not match sentence count " + std::to_string(gold.sentences.size()));
  }
  for (size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].size() != gold.sentences[i].tokens.size()) {
      throw DataError("evaluate: sentence " + std::to_string(i) + " has " +
                      std::to_string(gold.sentences[i].tokens.size()) + " tokens but " +
                      std::to_string(predicted[i].size()) + " predictions");
    }
  }
}

void finish(EvalReport& r) {
  auto ratios = [](TypeCounts& c) {
    c.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp)
                                    : 0.0;
    c.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                                 : 0.0;
    c.f1 = (c.precision + c.recall) > 0.0
               ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
               : 0.0;
  };
  for (auto& [etype, counts] : r.per_type) {
    ratios(counts);
    r.tp += counts.tp;
    r.fp += counts.fp;
    r.fn += counts.fn;
  }
  TypeCounts total{r.tp, r.fp, r.fn, 0.0, 0.0, 0.0};
  ratios(total);
  r.precision = total.precision;
  r.recall = total.recall;
  r.f1 = total.f1;
}

double token_accuracy_of(const Dataset& gold,
                         const std::vector<std::vector<std::string>>& predicted) {
  int64_t total = 0;
  int64_t hits = 0;
  for (size_t i = 0; i < gold.sentences.size(); ++i) {
    const auto& toks = gold.sentences[i].tokens;
    for (size_t t = 0; t < toks.size(); ++t) {
      ++total;
      if (toks[t].tag == predicted[i][t]) ++hits;
    }
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

std::vector<std::string> gold_tags_of(const Sentence& s) {
  std::vector<std::string> tags;
  tags.reserve(s.tokens.size());
  for (const Token& t : s.tokens) tags.push_back(t.tag);
  return tags;
}

}  // namespace

EvalReport evaluate(const Dataset& gold, const std::vector<std::vector<std::string>>& predicted) {
  check_alignment(gold, predicted);
  EvalReport r;
  for (size_t i = 0; i < gold.sentences.size(); ++i) {
    auto gold_spans = extract_spans(gold_tags_of(gold.sentences[i]));
    auto pred_spans = extract_spans(predicted[i]);
    std::set<EntitySpan> gold_set(gold_spans.begin(), gold_spans.end());
    std::set<EntitySpan> pred_set(pred_spans.begin(), pred_spans.end());
    for (const EntitySpan& p : pred_set) {
      if (gold_set.count(p)) {
        ++r.per_type[p.etype].tp;
      } else {
        ++r.per_type[p.etype].fp;
      }
    }
    for (const EntitySpan& g : gold_set) {
      if (!pred_set.count(g)) ++r.per_type[g.etype].fn;
    }
  }
  finish(r);
  r.token_accuracy = token_accuracy_of(gold, predicted);
  return r;
}

EvalReport evaluate_oracle(const Dataset& gold,
                           const std::vector<std::vector<std::string>>& predicted) {
  check_alignment(gold, predicted);

  // Tests whether the tag sequence expresses exactly the span (start, end, etype).
  auto has_span = [](const std::vector<std::string>& tags, int start, int end,
                     const std::string& etype) {
    if (tags[static_cast<size_t>(start)] != "B-" + etype) return false;
    for (int t = start + 1; t <= end; ++t) {
      if (tags[static_cast<size_t>(t)] != "I-" + etype) return false;
    }
    if (end + 1 < static_cast<int>(tags.size()) &&
        tags[static_cast<size_t>(end + 1)] == "I-" + etype) {
      return false;
    }
    return true;
  };

  EvalReport r;
  for (size_t i = 0; i < gold.sentences.size(); ++i) {
    // extract_spans repairs whatever it chunks, so mirror that on both sides.
    auto gold_tags = repair_bio(gold_tags_of(gold.sentences[i]));
    auto pred_tags = repair_bio(predicted[i]);
    std::set<std::string> types;
    for (const auto& tag : gold_tags) {
      if (tag != "O") types.insert(parse_tag(tag).second);
    }
    for (const auto& tag : pred_tags) {
      if (tag != "O") types.insert(parse_tag(tag).second);
    }
    const int n = static_cast<int>(gold_tags.size());
    for (const std::string& etype : types) {
      for (int start = 0; start < n; ++start) {
        for (int end = start; end < n; ++end) {
          const bool in_gold = has_span(gold_tags, start, end, etype);
          const bool in_pred = has_span(pred_tags, start, end, etype);
          if (in_gold && in_pred) ++r.per_type[etype].tp;
          if (!in_gold && in_pred) ++r.per_type[etype].fp;
          if (in_gold && !in_pred) ++r.per_type[etype].fn;
        }
      }
    }
  }
  finish(r);
  r.token_accuracy = token_accuracy_of(gold, predicted);
  return r;
}

}  // namespace nerforge
