#include "nerforge/training.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "nerforge/errors.hpp"
#include "nerforge/evaluation.hpp"

namespace nerforge {

double lr_schedule(double lr, double po, int epoch) {
  if (lr <= 0.0) throw std::invalid_argument("lr_schedule: lr must be > 0");
  if (po < 0.0) throw std::invalid_argument("lr_schedule: po must be >= 0");
  if (epoch < 0) throw std::invalid_argument("lr_schedule: epoch must be >= 0");
  return lr / (1.0 + po * static_cast<double>(epoch));
}

void TrainConfig::validate() const {
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (po < 0.0) throw std::invalid_argument("TrainConfig: po must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw std::invalid_argument("TrainConfig: dropout must be in [0, 1)");
  }
  if (validation_split <= 0.0 || validation_split >= 1.0) {
    throw std::invalid_argument("TrainConfig: validation_split must be in (0, 1)");
  }
  if (clip <= 0.0) throw std::invalid_argument("TrainConfig: clip must be > 0");
}

std::pair<Dataset, Dataset> split_train_validation(const Dataset& data, double fraction,
                                                   uint64_t seed) {
  if (fraction <= 0.0 || fraction >= 1.0) {
    throw std::invalid_argument("split_train_validation: fraction must be in (0, 1)");
  }
  const size_t n = data.sentences.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng = derive_rng(seed, "split");
  rng.shuffle(order);

  const auto n_valid =
      static_cast<size_t>(std::ceil(fraction * static_cast<double>(n)));
  if (n_valid == 0 || n_valid >= n) {
    throw DataError("split_train_validation: split of " + std::to_string(n) + " sentences at " +
                    std::to_string(fraction) + " leaves one side empty");
  }
  std::vector<Sentence> train_s, valid_s;
  train_s.reserve(n - n_valid);
  valid_s.reserve(n_valid);
  for (size_t i = 0; i < n - n_valid; ++i) train_s.push_back(data.sentences[order[i]]);
  for (size_t i = n - n_valid; i < n; ++i) valid_s.push_back(data.sentences[order[i]]);
  return {make_dataset(std::move(train_s)), make_dataset(std::move(valid_s))};
}

namespace {

std::vector<std::vector<std::string>> predict_dataset(TaggerModel& model, const Dataset& data,
                                                      const EmbeddingStore& store) {
  std::vector<std::vector<std::string>> preds;
  preds.reserve(data.sentences.size());
  for (const Sentence& s : data.sentences) preds.push_back(predict_tags(model, s, store));
  return preds;
}

}  // namespace

TrainResult train(TaggerModel model, const Dataset& data, const EmbeddingStore& store,
                  const TrainConfig& cfg, const ProgressSink& progress) {
  cfg.validate();
  if (data.sentences.empty()) throw DataError("train: empty dataset");
  for (const std::string& tag : data.tag_set) {
    if (!model.tag_index.count(tag)) {
      throw DataError("train: tag " + tag + " in data is unknown to the model");
    }
  }

  TrainResult result;
  result.best_val_f1 = -1.0;

  auto [train_set, valid_set] = split_train_validation(data, cfg.validation_split, cfg.seed);

  std::vector<ad::Param<float>*> params = model.params.all();
  ad::AdamState<float> adam;
  adam.init(params);
  Rng shuffle_rng = derive_rng(cfg.seed, "shuffle");
  Rng dropout_rng = derive_rng(cfg.seed, "dropout");

  model.config.dropout = cfg.dropout;
  TaggerParams<float> best_params = model.params;

  std::vector<size_t> order(train_set.sentences.size());
  std::iota(order.begin(), order.end(), size_t{0});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double eff_lr = lr_schedule(cfg.lr, cfg.po, epoch);
    shuffle_rng.shuffle(order);

    double loss_weighted = 0.0;
    int64_t tokens_seen = 0;
    for (size_t batch_start = 0; batch_start < order.size();
         batch_start += static_cast<size_t>(cfg.batch_size)) {
      const size_t batch_end =
          std::min(order.size(), batch_start + static_cast<size_t>(cfg.batch_size));
      ad::Tape<float> tape;
      std::vector<ad::Value<float>> score_mats;
      std::vector<int> gold;
      for (size_t bi = batch_start; bi < batch_end; ++bi) {
        const Sentence& sent = train_set.sentences[order[bi]];
        score_mats.push_back(forward_scores(tape, model, sent, store, true, &dropout_rng));
        for (const Token& tok : sent.tokens) gold.push_back(model.tag_index.at(tok.tag));
      }
      auto all_scores = score_mats.size() == 1 ? score_mats.front() : tape.vstack(score_mats);
      const auto batch_tokens = static_cast<int64_t>(gold.size());
      std::vector<uint8_t> mask(gold.size(), 1);
      auto loss = tape.masked_nll(all_scores, std::move(gold), std::move(mask));

      const double loss_val = static_cast<double>(loss.scalar());
      if (!std::isfinite(loss_val)) {
        throw NumericError("train: non-finite loss " + std::to_string(loss_val) + " at epoch " +
                           std::to_string(epoch) + ", batch " +
                           std::to_string(batch_start / static_cast<size_t>(cfg.batch_size)));
      }
      loss_weighted += loss_val * static_cast<double>(batch_tokens);
      tokens_seen += batch_tokens;

      model.params.zero_grads();
      tape.backward(loss);
      auto step = ad::adam_step(params, adam, eff_lr, cfg.clip);
      if (!step.applied) ++result.skipped_steps;
    }

    auto preds = predict_dataset(model, valid_set, store);
    const double f1 = evaluate(valid_set, preds).f1;

    EpochMetrics m;
    m.epoch = epoch;
    m.mean_loss = tokens_seen > 0 ? loss_weighted / static_cast<double>(tokens_seen) : 0.0;
    m.val_f1 = f1;
    m.lr = eff_lr;
    result.metrics.push_back(m);
    if (progress) progress(m);

    if (f1 > result.best_val_f1) {
      result.best_val_f1 = f1;
      result.best_epoch = epoch;
      best_params = model.params;
    }
  }

  if (cfg.epochs == 0) result.best_val_f1 = 0.0;
  model.params = std::move(best_params);
  result.model = std::move(model);
  return result;
}

std::vector<SearchTrial> sample_trials(const SearchSpace& space, int trials, uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("sample_trials: trials must be >= 1");
  if (space.lstm_state_choices.empty()) {
    throw std::invalid_argument("sample_trials: no lstm_state choices");
  }
  Rng rng = derive_rng(seed, "search");
  std::vector<SearchTrial> out(static_cast<size_t>(trials));
  for (int i = 0; i < trials; ++i) {
    SearchTrial& t = out[static_cast<size_t>(i)];
    t.index = i;
    const auto pick = rng.uniform_int(0, static_cast<int64_t>(space.lstm_state_choices.size()) - 1);
    t.lstm_state = space.lstm_state_choices[static_cast<size_t>(pick)];
    t.config.dropout = rng.uniform(space.dropout_lo, space.dropout_hi);
    t.config.batch_size = static_cast<int>(rng.uniform_int(space.batch_lo, space.batch_hi));
    t.config.lr = rng.log_uniform(space.lr_lo, space.lr_hi);
    t.config.epochs = static_cast<int>(rng.uniform_int(space.epochs_lo, space.epochs_hi));
    t.config.po = rng.uniform(space.po_lo, space.po_hi);
    t.config.seed = rng.next_u64();
  }
  return out;
}

SearchResult random_search(const SearchSpace& space, int trials, const Dataset& data,
                           const EmbeddingStore& store, uint64_t seed, int max_threads) {
  SearchResult result;
  result.trials = sample_trials(space, trials, seed);

  const CharVocab vocab = build_char_vocab(data);
  TaggerConfig base;
  base.tags = data.tag_set;

  auto run_trial = [&](SearchTrial& t) {
    try {
      TaggerConfig cfg = base;
      cfg.lstm_state = t.lstm_state;
      cfg.dropout = t.config.dropout;
      TaggerModel model = init_model(cfg, vocab, store, t.config.seed);
      TrainResult r = train(std::move(model), data, store, t.config);
      t.best_val_f1 = r.best_val_f1;
      t.best_epoch = r.best_epoch;
    } catch (const std::exception& e) {
      t.failed = true;
      t.error = e.what();
    }
  };

  const int workers = std::max(1, std::min(max_threads, trials));
  if (workers == 1) {
    for (auto& t : result.trials) run_trial(t);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (;;) {
          const size_t i = next.fetch_add(1);
          if (i >= result.trials.size()) return;
          run_trial(result.trials[i]);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  double best = -1.0;
  for (const SearchTrial& t : result.trials) {
    if (!t.failed && t.best_val_f1 > best) {
      best = t.best_val_f1;
      result.best_index = t.index;
    }
  }
  if (result.best_index < 0) {
    throw NumericError("random_search: all " + std::to_string(trials) +
                       " trials failed; first error: " + result.trials.front().error);
  }
  return result;
}

}  // namespace nerforge
