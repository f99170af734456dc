#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cdr/autodiff.hpp"
#include "cdr/config.hpp"
#include "cdr/datagen.hpp"

namespace cdr {

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ParamStore params{0};  // best-validation weights
  std::vector<EpochMetrics> history;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool diverged = false;
  bool early_stopped = false;
  // One line per (epoch, split) plus a final summary; contains only
  // deterministic fields, so identical runs produce identical logs.
  std::string metrics_text;
};

// Last val_fraction of the episodes (by generation order) become validation.
std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, double val_fraction);

// Builds a batch for the config's loss variant and paradigm.
Batch build_training_batch(const Dataset& dataset, Rng& rng, const ExperimentConfig& config);

// Full loss graph for one batch: encoder, predictor, similarity, InfoNCE.
Value batch_loss_graph(Tape& tape, const ExperimentConfig& config, const Batch& batch);

// Mean loss over `batches` batches drawn from a stream seeded with
// sweep_seed, so repeated sweeps see identical batches. Forward only;
// parameter values are not modified (lazily created loss weights excepted).
double evaluate_loss(ParamStore& params, const Dataset& dataset, const ExperimentConfig& config,
                     uint64_t sweep_seed, int batches);

// Adam training with per-epoch validation, patience early stopping, and a
// best-validation snapshot. Epoch 0 is a no-update evaluation pass. A
// non-finite loss aborts and returns the best snapshot so far.
TrainResult train(const ExperimentConfig& config, const Dataset& dataset);

}  // namespace cdr
