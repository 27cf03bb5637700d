#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "nerforge/embeddings.hpp"
#include "nerforge/model.hpp"
#include "nerforge/tape.hpp"
#include "nerforge/training.hpp"

namespace {

using namespace nerforge;

// Fixture-scale setup shared by the model benchmarks: a small synthetic
// vocabulary with full-size tagger dimensions (word dim 100 keeps the
// embedding build cheap; layer costs are dominated by the LSTM anyway).
struct BenchSetup {
  EmbeddingStore store;
  TaggerModel model;
  Sentence sentence;
  Dataset data;

  explicit BenchSetup(int word_dim = 100, int state = 200, int t_len = 20) {
    Rng rng(7);
    std::vector<std::pair<std::string, std::vector<float>>> entries;
    std::vector<std::string> words = {"the",  "patient", "showed",  "signs", "of",
                                      "acute", "renal",  "failure", "after", "treatment"};
    for (const auto& w : words) {
      std::vector<float> v(static_cast<size_t>(word_dim));
      for (auto& x : v) x = static_cast<float>(rng.uniform(-0.5, 0.5));
      entries.emplace_back(w, std::move(v));
    }
    store = EmbeddingStore::build("bench", word_dim, entries);

    for (int t = 0; t < t_len; ++t) {
      const std::string& w = words[static_cast<size_t>(t) % words.size()];
      sentence.tokens.push_back({w, t % 7 == 3 ? "B-D" : "O"});
    }
    data = make_dataset({sentence});

    TaggerConfig cfg;
    cfg.lstm_state = state;
    cfg.tags = data.tag_set;
    model = init_model(cfg, build_char_vocab(data), store, 7);
  }
};

void BM_LstmStepForward(benchmark::State& state) {
  const int d_in = 330;
  const int s = 200;
  ad::Param<float> wx("wx", ad::Shape::mat(d_in, 4 * s));
  ad::Param<float> wh("wh", ad::Shape::mat(s, 4 * s));
  ad::Param<float> b("b", ad::Shape::vec(4 * s));
  Rng rng(3);
  for (auto& v : wx.value.v) v = static_cast<float>(rng.uniform(-0.05, 0.05));
  for (auto& v : wh.value.v) v = static_cast<float>(rng.uniform(-0.05, 0.05));
  std::vector<float> x(d_in);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  for (auto _ : state) {
    ad::Tape<float> tape;
    ad::LstmWeightRefs<float> w{tape.leaf(wx), tape.leaf(wh), tape.leaf(b)};
    auto xv = tape.constant(std::span<const float>(x), ad::Shape::vec(d_in));
    auto h0 = tape.zeros(ad::Shape::vec(s));
    auto c0 = tape.zeros(ad::Shape::vec(s));
    auto [h, c] = tape.lstm_step(xv, h0, c0, w);
    benchmark::DoNotOptimize(h.data().data());
  }
}
BENCHMARK(BM_LstmStepForward);

void BM_Conv1dMaxpool(benchmark::State& state) {
  const int len = 12, d_c = 25, k = 3, f = 25;
  ad::Param<float> filters("f", ad::Shape::cube(k, d_c, f));
  ad::Param<float> bias("b", ad::Shape::vec(f));
  ad::Param<float> chars("c", ad::Shape::mat(len, d_c));
  Rng rng(3);
  for (auto& v : filters.value.v) v = static_cast<float>(rng.uniform(-0.3, 0.3));
  for (auto& v : chars.value.v) v = static_cast<float>(rng.uniform(-1.0, 1.0));

  for (auto _ : state) {
    ad::Tape<float> tape;
    auto out = tape.conv1d_maxpool(tape.leaf(chars), tape.leaf(filters), tape.leaf(bias));
    benchmark::DoNotOptimize(out.data().data());
  }
}
BENCHMARK(BM_Conv1dMaxpool);

void BM_ForwardScoresT20(benchmark::State& state) {
  BenchSetup setup;
  for (auto _ : state) {
    ad::Tape<float> tape;
    auto scores = forward_scores(tape, setup.model, setup.sentence, setup.store, false, nullptr);
    benchmark::DoNotOptimize(scores.data().data());
  }
}
BENCHMARK(BM_ForwardScoresT20);

void BM_TrainStepBatch8(benchmark::State& state) {
  BenchSetup setup;
  auto params = setup.model.params.all();
  ad::AdamState<float> adam;
  adam.init(params);
  Rng dropout_rng(11);
  std::vector<int> gold;
  for (const Token& t : setup.sentence.tokens) {
    gold.push_back(setup.model.tag_index.at(t.tag));
  }

  for (auto _ : state) {
    ad::Tape<float> tape;
    std::vector<ad::Value<float>> mats;
    std::vector<int> batch_gold;
    for (int i = 0; i < 8; ++i) {
      mats.push_back(
          forward_scores(tape, setup.model, setup.sentence, setup.store, true, &dropout_rng));
      batch_gold.insert(batch_gold.end(), gold.begin(), gold.end());
    }
    auto loss = tape.masked_nll(tape.vstack(mats), batch_gold,
                                std::vector<uint8_t>(batch_gold.size(), 1));
    setup.model.params.zero_grads();
    tape.backward(loss);
    auto step = ad::adam_step(params, adam, 0.001, 5.0);
    benchmark::DoNotOptimize(step.grad_norm);
  }
}
BENCHMARK(BM_TrainStepBatch8);

void BM_EmbeddingLookup(benchmark::State& state) {
  BenchSetup setup;
  const std::string hit = "patient";
  const std::string miss = "zzzunseen";
  for (auto _ : state) {
    benchmark::DoNotOptimize(setup.store.lookup(hit).found);
    benchmark::DoNotOptimize(setup.store.lookup(miss).found);
  }
}
BENCHMARK(BM_EmbeddingLookup);

}  // namespace

BENCHMARK_MAIN();
