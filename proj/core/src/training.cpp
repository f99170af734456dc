#include "cdr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "cdr/contrastive.hpp"
#include "cdr/models.hpp"
#include "cdr/util.hpp"

namespace cdr {
namespace {

constexpr int kValSweepBatches = 10;

BatchConfig batch_config(const ExperimentConfig& config) {
  BatchConfig bc;
  bc.batch = config.training.batch_size;
  bc.resolution = config.renderer.resolution;
  bc.context_len = config.model.context_len;
  bc.horizon = config.model.horizon;
  bc.within_fraction = config.training.negative_within_fraction;
  return bc;
}

std::string metric_line(int epoch, const char* split, double loss, int batch) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "epoch=%d split=%s loss=%.17g mi=%.17g\n", epoch, split, loss,
                mi_lower_bound(loss, batch));
  return buf;
}

}  // namespace

std::pair<Dataset, Dataset> split_train_val(const Dataset& dataset, double val_fraction) {
  CDR_REQUIRE(val_fraction > 0.0 && val_fraction <= 0.5, "val_fraction must be in (0, 0.5]");
  const int total = static_cast<int>(dataset.episodes.size());
  CDR_REQUIRE(total >= 2, "need at least 2 episodes to split");
  const int val_count =
      std::clamp(static_cast<int>(std::lround(total * val_fraction)), 1, total - 1);

  Dataset train = dataset;
  Dataset val = dataset;
  train.episodes.assign(dataset.episodes.begin(), dataset.episodes.end() - val_count);
  val.episodes.assign(dataset.episodes.end() - val_count, dataset.episodes.end());
  val.split = "val";
  return {std::move(train), std::move(val)};
}

Batch build_training_batch(const Dataset& dataset, Rng& rng, const ExperimentConfig& config) {
  const BatchConfig bc = batch_config(config);
  const Paradigm paradigm = config.paradigm();
  switch (config.loss_variant()) {
    case LossVariant::Cdr: return build_cdr_batch(dataset, rng, bc, paradigm);
    case LossVariant::Naive: return build_naive_batch(dataset, rng, bc, paradigm);
    case LossVariant::SameDomain: return build_same_domain_batch(dataset, rng, bc, paradigm);
  }
  throw std::invalid_argument("unreachable loss variant");
}

Value batch_loss_graph(Tape& tape, const ExperimentConfig& config, const Batch& batch) {
  ModelDims dims = config.model;
  dims.resolution = config.renderer.resolution;
  const SimilarityKind kind = similarity_from_string(config.training.similarity);

  const Value preds_in = tape.input(batch.pred_images);
  const Value labels_in = tape.input(batch.label_images);

  if (batch.paradigm == Paradigm::Controlled) {
    const Value z = encode(tape, preds_in, dims);
    const Value y = encode(tape, labels_in, dims);
    const Value actions = tape.input(batch.actions);
    const Value pred = predict_next(tape, z, actions, dims);
    return contrastive_loss_graph(tape, pred, y, kind);
  }

  CDR_REQUIRE(batch.context_len == dims.context_len && batch.horizon == dims.horizon,
              "batch context/horizon does not match the model dims");
  const int n = batch.batch;
  const Value z_seq = encode(tape, preds_in, dims);
  const std::vector<Value> heads = predict_multistep(tape, z_seq, batch.context_len, n, dims);
  const Value y_all = encode(tape, labels_in, dims);

  Value total;
  for (int k = 0; k < batch.horizon; ++k) {
    const Value y_k = tape.slice_rows(y_all, k * n, n);
    const Value l_k = contrastive_loss_graph(tape, heads[k], y_k, kind);
    total = k == 0 ? l_k : tape.add(total, l_k);
  }
  return tape.scale(total, 1.0 / batch.horizon);
}

double evaluate_loss(ParamStore& params, const Dataset& dataset, const ExperimentConfig& config,
                     uint64_t sweep_seed, int batches) {
  CDR_REQUIRE(batches >= 1, "evaluate_loss needs at least one batch");
  Rng rng(sweep_seed);
  double sum = 0.0;
  for (int b = 0; b < batches; ++b) {
    const Batch batch = build_training_batch(dataset, rng, config);
    Tape tape(params);
    sum += tape.scalar(batch_loss_graph(tape, config, batch));
  }
  return sum / batches;
}

TrainResult train(const ExperimentConfig& config, const Dataset& dataset) {
  const Paradigm paradigm = config.paradigm();
  const EpisodeKind want_kind = paradigm == Paradigm::Controlled ? EpisodeKind::Controlled
                                                                 : EpisodeKind::Uncontrolled;
  CDR_REQUIRE(dataset.kind == want_kind, "dataset kind ", to_string(dataset.kind),
              " does not match paradigm ", to_string(paradigm));

  auto [train_ds, val_ds] = split_train_val(dataset, config.training.val_fraction);
  {
    std::set<uint64_t> train_seeds, val_seeds;
    for (const PairedEpisode& ep : train_ds.episodes) train_seeds.insert(ep.seed);
    for (const PairedEpisode& ep : val_ds.episodes) val_seeds.insert(ep.seed);
    for (uint64_t s : val_seeds)
      CDR_REQUIRE(train_seeds.count(s) == 0, "validation episode seed leaked into train split");
  }

  const int n = config.training.batch_size;
  const int64_t train_avail = available_transitions(train_ds, paradigm, batch_config(config));
  CDR_REQUIRE(train_avail >= n, "train split has ", train_avail,
              " transitions; batch size ", n, " does not fit");
  const int batches_per_epoch = static_cast<int>(std::max<int64_t>(1, train_avail / n));

  ParamStore store(derive_seed(config.training.seed, "init"));
  AdamConfig adam;
  adam.learning_rate = config.training.learning_rate;

  Rng batch_rng(derive_seed(config.training.seed, "train_batches"));
  const uint64_t val_seed = derive_seed(config.training.seed, "val_sweep");

  TrainResult result;
  ParamStore best = store;

  // Mean loss over one epoch of fresh batches; updates when asked. Returns
  // NaN as the divergence signal.
  auto run_epoch = [&](bool update) {
    double sum = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const Batch batch = build_training_batch(train_ds, batch_rng, config);
      Tape tape(store);
      const Value loss = batch_loss_graph(tape, config, batch);
      const double value = tape.scalar(loss);
      if (!std::isfinite(value)) return std::nan("");
      sum += value;
      if (update) {
        tape.backward(loss);
        adam_step(store, tape, adam);
      }
    }
    return sum / batches_per_epoch;
  };

  int bad_streak = 0;
  const char* stop_reason = "budget";
  for (int epoch = 0; epoch <= config.training.epochs; ++epoch) {
    const double train_loss = run_epoch(epoch > 0);
    const double val_loss = std::isfinite(train_loss)
                                ? evaluate_loss(store, val_ds, config, val_seed, kValSweepBatches)
                                : std::nan("");
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
      result.diverged = true;
      stop_reason = "diverged";
      result.metrics_text += str_cat("epoch=", epoch, " event=diverged\n");
      break;
    }

    result.history.push_back({epoch, train_loss, val_loss});
    result.metrics_text += metric_line(epoch, "train", train_loss, n);
    result.metrics_text += metric_line(epoch, "val", val_loss, n);

    if (result.history.size() == 1 || val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      best = store;
      bad_streak = 0;
    } else if (++bad_streak >= config.training.patience) {
      result.early_stopped = true;
      stop_reason = "early";
      break;
    }
  }

  char tail[128];
  std::snprintf(tail, sizeof(tail), "final best_epoch=%d best_val_loss=%.17g stop=%s\n",
                result.best_epoch, result.best_val_loss, stop_reason);
  result.metrics_text += tail;
  result.params = std::move(best);
  return result;
}

}  // namespace cdr
