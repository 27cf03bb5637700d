#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nerforge/adam.hpp"
#include "nerforge/corpus.hpp"
#include "nerforge/embeddings.hpp"
#include "nerforge/features.hpp"
#include "nerforge/rng.hpp"
#include "nerforge/tape.hpp"
#include "nerforge/tensor.hpp"

namespace nerforge {

struct TaggerConfig {
  int word_dim = 0;
  int char_emb_dim = 25;
  int cnn_filters = 25;
  int cnn_kernel = 3;
  int case_emb_dim = 5;
  int lstm_state = 200;
  double dropout = 0.5;
  std::vector<std::string> tags;
  int char_vocab_size = 0;

  int input_dim() const { return word_dim + case_emb_dim + cnn_filters; }
  int num_tags() const { return static_cast<int>(tags.size()); }
  void validate() const;
};

// All trainable tensors, in the order they are serialized. Word embeddings
// live in the EmbeddingStore and are frozen, so they are absent here.
template <typename T>
struct TaggerParams {
  ad::Param<T> char_emb;     // [(|charvocab|+2) x char_emb_dim]
  ad::Param<T> cnn_filters;  // [kernel x char_emb_dim x filters]
  ad::Param<T> cnn_bias;     // [filters]
  ad::Param<T> case_emb;     // [6 x case_emb_dim]
  ad::Param<T> fwd_wx;       // [input_dim x 4*state]
  ad::Param<T> fwd_wh;       // [state x 4*state]
  ad::Param<T> fwd_b;        // [4*state]
  ad::Param<T> bwd_wx;
  ad::Param<T> bwd_wh;
  ad::Param<T> bwd_b;
  ad::Param<T> dec_f_w;  // [state x K]
  ad::Param<T> dec_f_b;  // [K]
  ad::Param<T> dec_b_w;
  ad::Param<T> dec_b_b;

  std::vector<ad::Param<T>*> all() {
    return {&char_emb, &cnn_filters, &cnn_bias, &case_emb, &fwd_wx, &fwd_wh, &fwd_b,
            &bwd_wx,   &bwd_wh,      &bwd_b,    &dec_f_w,  &dec_f_b, &dec_b_w, &dec_b_b};
  }

  std::vector<const ad::Param<T>*> all() const {
    return {&char_emb, &cnn_filters, &cnn_bias, &case_emb, &fwd_wx, &fwd_wh, &fwd_b,
            &bwd_wx,   &bwd_wh,      &bwd_b,    &dec_f_w,  &dec_f_b, &dec_b_w, &dec_b_b};
  }

  int64_t count() {
    int64_t n = 0;
    for (auto* p : all()) n += static_cast<int64_t>(p->value.v.size());
    return n;
  }

  void zero_grads() {
    for (auto* p : all()) p->zero_grad();
  }
};

namespace detail {

// Glorot draws happen in double so a float and a double model initialized
// from the same seed agree coordinate-for-coordinate.
template <typename T>
void glorot_fill(ad::Param<T>& p, int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
  for (auto& w : p.value.v) w = static_cast<T>(rng.uniform(-limit, limit));
}

}  // namespace detail

template <typename T>
TaggerParams<T> init_params(const TaggerConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int s = cfg.lstm_state;
  const int k = cfg.num_tags();
  const int d_in = cfg.input_dim();
  const int rows = cfg.char_vocab_size + 2;

  TaggerParams<T> p;
  p.char_emb = ad::Param<T>("char_emb", ad::Shape::mat(rows, cfg.char_emb_dim));
  p.cnn_filters = ad::Param<T>(
      "cnn_filters", ad::Shape::cube(cfg.cnn_kernel, cfg.char_emb_dim, cfg.cnn_filters));
  p.cnn_bias = ad::Param<T>("cnn_bias", ad::Shape::vec(cfg.cnn_filters));
  p.case_emb = ad::Param<T>("case_emb", ad::Shape::mat(kNumCaseCategories, cfg.case_emb_dim));
  auto lstm = [&](const std::string& prefix, ad::Param<T>& wx, ad::Param<T>& wh, ad::Param<T>& b) {
    wx = ad::Param<T>(prefix + "_wx", ad::Shape::mat(d_in, 4 * s));
    wh = ad::Param<T>(prefix + "_wh", ad::Shape::mat(s, 4 * s));
    b = ad::Param<T>(prefix + "_b", ad::Shape::vec(4 * s));
  };
  lstm("fwd", p.fwd_wx, p.fwd_wh, p.fwd_b);
  lstm("bwd", p.bwd_wx, p.bwd_wh, p.bwd_b);
  p.dec_f_w = ad::Param<T>("dec_f_w", ad::Shape::mat(s, k));
  p.dec_f_b = ad::Param<T>("dec_f_b", ad::Shape::vec(k));
  p.dec_b_w = ad::Param<T>("dec_b_w", ad::Shape::mat(s, k));
  p.dec_b_b = ad::Param<T>("dec_b_b", ad::Shape::vec(k));

  Rng rng = derive_rng(seed, "init");
  detail::glorot_fill(p.char_emb, rows, cfg.char_emb_dim, rng);
  detail::glorot_fill(p.cnn_filters, cfg.cnn_kernel * cfg.char_emb_dim, cfg.cnn_filters, rng);
  detail::glorot_fill(p.case_emb, kNumCaseCategories, cfg.case_emb_dim, rng);
  detail::glorot_fill(p.fwd_wx, d_in, 4 * s, rng);
  detail::glorot_fill(p.fwd_wh, s, 4 * s, rng);
  detail::glorot_fill(p.bwd_wx, d_in, 4 * s, rng);
  detail::glorot_fill(p.bwd_wh, s, 4 * s, rng);
  detail::glorot_fill(p.dec_f_w, s, k, rng);
  detail::glorot_fill(p.dec_b_w, s, k, rng);

  // Biases start at zero except the forget gate, opened at 1 so early
  // training does not wash the cell state out.
  for (auto& b : {&p.fwd_b, &p.bwd_b}) {
    for (int j = s; j < 2 * s; ++j) b->value.v[static_cast<size_t>(j)] = T(1);
  }
  return p;
}

struct TaggerModel {
  TaggerConfig config;
  CharVocab char_vocab;
  std::map<std::string, int> tag_index;
  std::string embedding_name;
  uint64_t seed = 0;
  TaggerParams<float> params;
};

TaggerModel init_model(TaggerConfig config, const CharVocab& vocab, const EmbeddingStore& store,
                       uint64_t seed);

// Full per-sentence forward pass: [word vec || casing row || char CNN]
// per token, dropout on the concat, BiLSTM, dropout on each direction's
// state, summed per-direction affine scores, one log-softmax per token.
template <typename T>
ad::Value<T> forward_scores_t(ad::Tape<T>& tape, TaggerParams<T>& params, const TaggerConfig& cfg,
                              const CharVocab& vocab, const Sentence& sentence,
                              const EmbeddingStore& store, bool training, Rng* rng) {
  if (sentence.tokens.empty()) throw std::invalid_argument("forward_scores: empty sentence");
  auto char_emb = tape.leaf(params.char_emb);
  auto filters = tape.leaf(params.cnn_filters);
  auto cnn_bias = tape.leaf(params.cnn_bias);
  auto case_emb = tape.leaf(params.case_emb);
  ad::LstmWeightRefs<T> fw{tape.leaf(params.fwd_wx), tape.leaf(params.fwd_wh),
                           tape.leaf(params.fwd_b)};
  ad::LstmWeightRefs<T> bw{tape.leaf(params.bwd_wx), tape.leaf(params.bwd_wh),
                           tape.leaf(params.bwd_b)};
  auto dec_f_w = tape.leaf(params.dec_f_w);
  auto dec_f_b = tape.leaf(params.dec_f_b);
  auto dec_b_w = tape.leaf(params.dec_b_w);
  auto dec_b_b = tape.leaf(params.dec_b_b);

  std::vector<ad::Value<T>> xs;
  xs.reserve(sentence.tokens.size());
  std::vector<T> wvec(static_cast<size_t>(cfg.word_dim));
  for (const Token& tok : sentence.tokens) {
    auto look = store.lookup(tok.surface);
    for (int i = 0; i < cfg.word_dim; ++i) wvec[static_cast<size_t>(i)] = static_cast<T>(look.vec[static_cast<size_t>(i)]);
    auto word = tape.constant(std::span<const T>(wvec), ad::Shape::vec(cfg.word_dim));
    auto casing = tape.row(case_emb, static_cast<int>(case_of(tok.surface)));
    auto chars = tape.gather_rows(char_emb, encode_chars(tok.surface, vocab, cfg.cnn_kernel));
    auto char_vec = tape.conv1d_maxpool(chars, filters, cnn_bias);
    auto x = tape.concat({word, casing, char_vec});
    xs.push_back(tape.dropout(x, cfg.dropout, training, rng));
  }

  auto states = ad::bilstm(tape, xs, fw, bw, cfg.lstm_state);

  std::vector<ad::Value<T>> score_rows;
  score_rows.reserve(xs.size());
  for (size_t t = 0; t < xs.size(); ++t) {
    auto hf = tape.dropout(states.fwd[t], cfg.dropout, training, rng);
    auto hb = tape.dropout(states.bwd[t], cfg.dropout, training, rng);
    auto logits = tape.add(tape.affine(hf, dec_f_w, dec_f_b), tape.affine(hb, dec_b_w, dec_b_b));
    score_rows.push_back(tape.log_softmax(logits));
  }
  return tape.stack_rows(score_rows);
}

ad::Value<float> forward_scores(ad::Tape<float>& tape, TaggerModel& model, const Sentence& sentence,
                                const EmbeddingStore& store, bool training, Rng* rng);

std::vector<std::string> predict_tags(TaggerModel& model, const Sentence& sentence,
                                      const EmbeddingStore& store);

void save_model(const TaggerModel& model, const std::string& path);
TaggerModel load_model(const std::string& path, const EmbeddingStore& store);

}  // namespace nerforge
