#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "nerforge/errors.hpp"
#include "nerforge/model.hpp"
#include "nerforge/rng.hpp"
#include "testutil.hpp"

using namespace nerforge;
namespace tu = nerforge::testutil;

namespace {

EmbeddingStore tiny_store(int dim = 6) {
  std::vector<std::pair<std::string, std::vector<float>>> entries;
  int w = 0;
  for (const char* word : {"the", "aspirin", "eases", "migraine", "dose"}) {
    std::vector<float> v(static_cast<size_t>(dim));
    for (int i = 0; i < dim; ++i) v[static_cast<size_t>(i)] = 0.1f * static_cast<float>(w + 1) - 0.03f * static_cast<float>(i);
    entries.emplace_back(word, std::move(v));
    ++w;
  }
  return EmbeddingStore::build("tiny", dim, entries);
}

TaggerConfig tiny_config() {
  TaggerConfig cfg;
  cfg.char_emb_dim = 4;
  cfg.cnn_filters = 5;
  cfg.cnn_kernel = 3;
  cfg.case_emb_dim = 3;
  cfg.lstm_state = 4;
  cfg.dropout = 0.5;
  cfg.tags = {"B-D", "I-D", "O"};
  return cfg;
}

TaggerModel tiny_model(const EmbeddingStore& store, uint64_t seed = 42) {
  Sentence s;
  s.tokens = {{"the", "O"}, {"aspirin", "O"}, {"eases", "O"}, {"migraine", "O"}, {"dose", "O"}};
  CharVocab vocab = build_char_vocab(make_dataset({s}));
  return init_model(tiny_config(), vocab, store, seed);
}

Sentence sentence_of(std::initializer_list<const char*> words) {
  Sentence s;
  for (const char* w : words) s.tokens.push_back(Token{w, "O"});
  return s;
}

int local_argmax(const std::vector<double>& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i) {
    if (v[static_cast<size_t>(i)] > v[static_cast<size_t>(best)]) best = i;
  }
  return best;
}

std::vector<double> local_log_softmax(const std::vector<double>& z) {
  double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0;
  for (double v : z) sum += std::exp(v - zmax);
  const double log_z = zmax + std::log(sum);
  std::vector<double> out;
  for (double v : z) out.push_back(v - log_z);
  return out;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("parameter count matches the hand-computed total") {
  // reference configuration: 300-dim words, 80 chars, 3 tags, state 200
  const int word_dim = 300, chars = 80, K = 3, s = 200;
  const int d_in = word_dim + 5 + 25;  // word + casing + char CNN
  const int64_t expected =
      static_cast<int64_t>(chars + 2) * 25       // char embeddings
      + 3 * 25 * 25                              // conv filters
      + 25                                       // conv bias
      + 6 * 5                                    // casing embeddings
      + 2 * (static_cast<int64_t>(d_in) * 4 * s  // wx, both directions
             + static_cast<int64_t>(s) * 4 * s   // wh
             + 4 * s)                            // gate bias
      + 2 * (static_cast<int64_t>(s) * K + K);   // decoders
  REQUIRE(expected == 854786);

  TaggerConfig cfg;
  cfg.word_dim = word_dim;
  cfg.char_vocab_size = chars;
  cfg.tags = {"B-X", "I-X", "O"};
  auto params = init_params<float>(cfg, 1);
  CHECK(params.count() == expected);
}

TEST_CASE("initialization is seed-deterministic") {
  auto store = tiny_store();
  auto a = tiny_model(store, 7);
  auto b = tiny_model(store, 7);
  auto c = tiny_model(store, 8);

  auto pa = a.params.all();
  auto pb = b.params.all();
  auto pc = c.params.all();
  bool all_equal = true;
  bool any_differ = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    if (pa[i]->value.v != pb[i]->value.v) all_equal = false;
    if (pa[i]->value.v != pc[i]->value.v) any_differ = true;
  }
  CHECK(all_equal);
  CHECK(any_differ);
}

TEST_CASE("float and double initializations share the same draws") {
  auto cfg = tiny_config();
  cfg.word_dim = 6;
  cfg.char_vocab_size = 11;
  auto pf = init_params<float>(cfg, 99);
  auto pd = init_params<double>(cfg, 99);
  auto fs = pf.all();
  auto ds = pd.all();
  REQUIRE(fs.size() == ds.size());
  for (size_t i = 0; i < fs.size(); ++i) {
    REQUIRE(fs[i]->value.v.size() == ds[i]->value.v.size());
    for (size_t j = 0; j < fs[i]->value.v.size(); ++j) {
      CHECK(fs[i]->value.v[j] == static_cast<float>(ds[i]->value.v[j]));
    }
  }
}

TEST_CASE("biases start at zero except the open forget gate") {
  auto cfg = tiny_config();
  cfg.word_dim = 6;
  cfg.char_vocab_size = 11;
  const int s = cfg.lstm_state;
  auto p = init_params<float>(cfg, 3);
  for (const auto* bias : {&p.fwd_b, &p.bwd_b}) {
    for (int j = 0; j < 4 * s; ++j) {
      const float expect = (j >= s && j < 2 * s) ? 1.0f : 0.0f;
      CHECK(bias->value.v[static_cast<size_t>(j)] == expect);
    }
  }
  for (float v : p.cnn_bias.value.v) CHECK(v == 0.0f);
  for (float v : p.dec_f_b.value.v) CHECK(v == 0.0f);
  for (float v : p.dec_b_b.value.v) CHECK(v == 0.0f);

  // glorot bound holds for the weight matrices
  const double limit_wh = std::sqrt(6.0 / (s + 4.0 * s));
  for (float v : p.fwd_wh.value.v) {
    CHECK(std::abs(v) <= limit_wh * (1 + 1e-6));
  }
}

TEST_CASE("init_model wires dimensions from the store and vocab") {
  auto store = tiny_store(6);
  auto model = tiny_model(store, 42);
  CHECK(model.config.word_dim == 6);
  CHECK(model.config.char_vocab_size == static_cast<int>(model.char_vocab.size()));
  CHECK(model.embedding_name == "tiny");
  CHECK(model.seed == 42);
  CHECK(model.tag_index.at("B-D") == 0);
  CHECK(model.tag_index.at("O") == 2);

  auto bad_cfg = tiny_config();
  bad_cfg.tags = {"B-D", "B-D", "O"};
  CHECK_THROWS_AS(init_model(bad_cfg, model.char_vocab, store, 1), std::invalid_argument);

  auto no_tags = tiny_config();
  no_tags.tags.clear();
  CHECK_THROWS_AS(init_model(no_tags, model.char_vocab, store, 1), std::invalid_argument);
}

TEST_CASE("forward scores are [T x K] row-normalized log-probabilities") {
  auto store = tiny_store();
  auto model = tiny_model(store);
  auto sent = sentence_of({"the", "aspirin", "dose"});

  ad::Tape<float> tape;
  auto scores = forward_scores(tape, model, sent, store, false, nullptr);
  REQUIRE(scores.shape() == ad::Shape::mat(3, 3));
  for (int t = 0; t < 3; ++t) {
    double sum = 0;
    for (int j = 0; j < 3; ++j) sum += std::exp(static_cast<double>(scores.data()[t * 3 + j]));
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
  }

  // inference is dropout-free, so a second pass reproduces the first
  ad::Tape<float> tape2;
  auto scores2 = forward_scores(tape2, model, sent, store, false, nullptr);
  for (int i = 0; i < 9; ++i) CHECK(scores.data()[i] == scores2.data()[i]);

  ad::Tape<float> tape3;
  CHECK_THROWS_AS(forward_scores(tape3, model, Sentence{}, store, false, nullptr),
                  std::invalid_argument);
}

TEST_CASE("words outside the store fall back to the zero vector but still score") {
  auto store = tiny_store();
  auto model = tiny_model(store);
  auto sent = sentence_of({"zzgreb", "qqowc"});
  auto tags = predict_tags(model, sent, store);
  REQUIRE(tags.size() == 2);
  CHECK(validate_sequence(tags, TagScheme::BIO));
}

TEST_CASE("summing logits before one log-softmax preserves the argmax") {
  // the decoder adds the two directions' scores and normalizes once;
  // normalizing each direction first would pick the same tag
  Rng rng(555);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> f(5), b(5);
    for (int i = 0; i < 5; ++i) {
      f[static_cast<size_t>(i)] = rng.uniform(-4, 4);
      b[static_cast<size_t>(i)] = rng.uniform(-4, 4);
    }
    std::vector<double> sum(5), per_dir(5);
    auto lf = local_log_softmax(f);
    auto lb = local_log_softmax(b);
    for (int i = 0; i < 5; ++i) {
      sum[static_cast<size_t>(i)] = f[static_cast<size_t>(i)] + b[static_cast<size_t>(i)];
      per_dir[static_cast<size_t>(i)] = lf[static_cast<size_t>(i)] + lb[static_cast<size_t>(i)];
    }
    CHECK(local_argmax(local_log_softmax(sum)) == local_argmax(per_dir));
  }
}

TEST_CASE("predict_tags decodes greedily and repairs the sequence") {
  auto store = tiny_store();
  auto model = tiny_model(store);
  auto sent = sentence_of({"the", "aspirin", "eases"});

  // silence every signal path, then steer with the forward decoder bias
  for (auto* p : model.params.all()) p->value.zero();
  auto set_bias = [&](int tag) {
    model.params.dec_f_b.value.zero();
    model.params.dec_f_b.value[tag] = 5.0f;
  };

  set_bias(model.tag_index.at("O"));
  CHECK(predict_tags(model, sent, store) == std::vector<std::string>{"O", "O", "O"});

  // a uniform I-D preference is ill-formed BIO; the decoder must repair it
  set_bias(model.tag_index.at("I-D"));
  CHECK(predict_tags(model, sent, store) == std::vector<std::string>{"B-D", "I-D", "I-D"});

  set_bias(model.tag_index.at("B-D"));
  CHECK(predict_tags(model, sent, store) == std::vector<std::string>{"B-D", "B-D", "B-D"});

  // exact ties pick the lowest tag index at every position
  model.params.dec_f_b.value.zero();
  CHECK(predict_tags(model, sent, store) == std::vector<std::string>{"B-D", "B-D", "B-D"});
}

TEST_CASE("random models always emit valid BIO") {
  auto store = tiny_store();
  Rng rng(77);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto model = tiny_model(store, seed);
    for (int i = 0; i < 10; ++i) {
      Sentence s;
      const int len = 1 + static_cast<int>(rng.next_below(7));
      for (int t = 0; t < len; ++t) {
        s.tokens.push_back(Token{i % 2 ? "aspirin" : "Qx7", "O"});
      }
      auto tags = predict_tags(model, s, store);
      CHECK(tags.size() == s.tokens.size());
      CHECK(validate_sequence(tags, TagScheme::BIO));
    }
  }
}

TEST_CASE("save and load round-trip the model exactly") {
  tu::TempDir dir("model");
  auto store = tiny_store();
  auto model = tiny_model(store, 1234);
  const std::string path = dir.file("m.nerb");
  save_model(model, path);

  auto loaded = load_model(path, store);
  CHECK(loaded.config.word_dim == model.config.word_dim);
  CHECK(loaded.config.char_emb_dim == model.config.char_emb_dim);
  CHECK(loaded.config.cnn_filters == model.config.cnn_filters);
  CHECK(loaded.config.cnn_kernel == model.config.cnn_kernel);
  CHECK(loaded.config.case_emb_dim == model.config.case_emb_dim);
  CHECK(loaded.config.lstm_state == model.config.lstm_state);
  CHECK(loaded.config.dropout == model.config.dropout);
  CHECK(loaded.config.tags == model.config.tags);
  CHECK(loaded.char_vocab.chars() == model.char_vocab.chars());
  CHECK(loaded.tag_index == model.tag_index);
  CHECK(loaded.embedding_name == model.embedding_name);
  CHECK(loaded.seed == model.seed);

  auto pa = model.params.all();
  auto pb = loaded.params.all();
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->name == pb[i]->name);
    CHECK(pa[i]->value.shape == pb[i]->value.shape);
    CHECK(pa[i]->value.v == pb[i]->value.v);
  }

  // a second save of the loaded model is byte-identical
  const std::string path2 = dir.file("m2.nerb");
  save_model(loaded, path2);
  CHECK(tu::read_file(path) == tu::read_file(path2));

  // and predictions survive the round trip
  auto sent = sentence_of({"aspirin", "eases", "migraine"});
  CHECK(predict_tags(model, sent, store) == predict_tags(loaded, sent, store));
}

TEST_CASE("load_model rejects damaged files") {
  tu::TempDir dir("model");
  auto store = tiny_store();
  auto model = tiny_model(store);
  const std::string path = dir.file("m.nerb");
  save_model(model, path);
  const std::string good = tu::read_file(path);

  SUBCASE("wrong magic") {
    std::string bad = good;
    bad[0] = 'X';
    tu::write_file(path, bad);
    CHECK_THROWS_AS(load_model(path, store), DataError);
  }
  SUBCASE("unsupported version") {
    std::string bad = good;
    bad[4] = 9;
    tu::write_file(path, bad);
    CHECK_THROWS_AS(load_model(path, store), DataError);
  }
  SUBCASE("truncated") {
    tu::write_file(path, good.substr(0, good.size() / 2));
    CHECK_THROWS_AS(load_model(path, store), DataError);
    tu::write_file(path, good.substr(0, 3));
    CHECK_THROWS_AS(load_model(path, store), DataError);
  }
  SUBCASE("trailing garbage") {
    tu::write_file(path, good + "x");
    CHECK_THROWS_AS(load_model(path, store), DataError);
  }
  SUBCASE("store dimension mismatch") {
    auto other = tiny_store(9);
    CHECK_THROWS_AS(load_model(path, other), DataError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_model(dir.file("absent.nerb"), store), DataError);
  }
}

TEST_SUITE_END();
