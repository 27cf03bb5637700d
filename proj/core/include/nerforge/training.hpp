#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nerforge/corpus.hpp"
#include "nerforge/embeddings.hpp"
#include "nerforge/model.hpp"

namespace nerforge {

// Effective learning rate for a 0-based epoch index: lr / (1 + po * epoch).
double lr_schedule(double lr, double po, int epoch);

struct TrainConfig {
  double lr = 0.001;
  double po = 0.005;
  int batch_size = 8;
  int epochs = 15;
  double dropout = 0.5;
  double validation_split = 0.2;
  uint64_t seed = 42;
  double clip = 5.0;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;          // 0-based
  double mean_loss = 0.0; // token-weighted mean over the epoch's batches
  double val_f1 = 0.0;    // entity F1 on the validation split, in [0,1]
  double lr = 0.0;        // effective rate used this epoch
};

using ProgressSink = std::function<void(const EpochMetrics&)>;

struct TrainResult {
  TaggerModel model;  // parameters from the best validation epoch
  std::vector<EpochMetrics> metrics;
  int best_epoch = -1;  // -1 when epochs == 0
  double best_val_f1 = 0.0;
  int64_t skipped_steps = 0;  // Adam steps dropped for non-finite gradients
};

// Seeded shuffle, then the last ceil(fraction * N) sentences become the
// validation split. Throws DataError if either side would be empty.
std::pair<Dataset, Dataset> split_train_validation(const Dataset& data, double fraction,
                                                   uint64_t seed);

// Mini-batch training: per epoch, reshuffle, walk batches of batch_size
// sentences, one Adam step per batch at the epoch's effective rate, then
// score entity F1 on the validation split. Returns the parameter snapshot
// of the best epoch (ties resolved toward the earlier one).
TrainResult train(TaggerModel model, const Dataset& data, const EmbeddingStore& store,
                  const TrainConfig& cfg, const ProgressSink& progress = {});

struct SearchSpace {
  std::vector<int> lstm_state_choices{200, 250};
  double dropout_lo = 0.3, dropout_hi = 0.7;
  int batch_lo = 4, batch_hi = 256;
  double lr_lo = 0.0003, lr_hi = 0.01;  // sampled log-uniformly
  int epochs_lo = 10, epochs_hi = 100;
  double po_lo = 0.001, po_hi = 0.01;
};

struct SearchTrial {
  int index = 0;
  TrainConfig config;
  int lstm_state = 0;
  double best_val_f1 = 0.0;
  int best_epoch = -1;
  bool failed = false;
  std::string error;
};

struct SearchResult {
  int best_index = -1;
  std::vector<SearchTrial> trials;
};

// All trial configurations, sampled up front from one seeded stream so the
// set of trials does not depend on how they are later scheduled.
std::vector<SearchTrial> sample_trials(const SearchSpace& space, int trials, uint64_t seed);

// Runs train() once per sampled trial and ranks by best validation F1
// (ties toward the earlier trial index). Individual trial failures are
// recorded; only all trials failing is fatal. max_threads > 1 runs trials
// concurrently with per-trial models and seeds, merged by index.
SearchResult random_search(const SearchSpace& space, int trials, const Dataset& data,
                           const EmbeddingStore& store, uint64_t seed, int max_threads = 1);

}  // namespace nerforge
