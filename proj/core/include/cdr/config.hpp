#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdr/checkpoint.hpp"
#include "cdr/models.hpp"
#include "cdr/renderer.hpp"
#include "cdr/worldsim.hpp"

namespace cdr {

enum class Paradigm : uint8_t { Controlled = 0, Uncontrolled = 1 };
enum class LossVariant : uint8_t { Cdr = 0, Naive = 1, SameDomain = 2 };

Paradigm paradigm_from_string(const std::string& name);
LossVariant loss_variant_from_string(const std::string& name);
const char* to_string(Paradigm p);
const char* to_string(LossVariant v);

struct RendererConfig {
  int resolution = 32;
  int holdout_families = 2;
  uint64_t family_split_seed = 7;
};

struct TrainingConfig {
  std::string paradigm = "controlled";
  std::string loss_variant = "cdr";
  std::string similarity = "dotexp";
  int batch_size = 64;
  int epochs = 30;
  double learning_rate = 1e-3;
  int patience = 5;
  uint64_t seed = 11;
  double negative_within_fraction = 0.5;
  int episodes = 2000;
  int frames_controlled = 15;
  int frames_uncontrolled = 30;
  double val_fraction = 0.1;
};

struct Prop1Config {
  std::string loss = "squared_error";  // or "infonce"
  int trials = 10;
  int steps = 1200;
  int batch_size = 512;
  double learning_rate = 0.01;
  int eval_samples = 20000;
};

struct EvaluationConfig {
  int pool_size = 2000;
  int query_count = 200;
  int invariance_pairs = 200;
  std::string retrieval_similarity = "cosine";
  uint64_t seed = 13;
  Prop1Config prop1;
};

struct PlanningConfig {
  int candidates = 1000;
  int max_steps = 10;
  double goal_tolerance = 0.15;
  std::string distance = "negl2";
  int episodes = 20;
  uint64_t seed = 17;
  int scramble_actions = 12;
};

// The one experiment description everything runs from. Loaded from a JSON
// file; unknown keys are rejected, missing keys keep these defaults; --set
// style overrides patch leaf keys before validation.
struct ExperimentConfig {
  uint64_t seed = 1;
  std::string out_dir = "out";
  SceneConfig scene;
  RendererConfig renderer;
  ModelDims model;  // model.resolution mirrors renderer.resolution after load
  TrainingConfig training;
  EvaluationConfig evaluation;
  PlanningConfig planning;

  static ExperimentConfig defaults();
  static ExperimentConfig from_file(const std::string& path,
                                    const std::vector<std::string>& overrides = {});
  // Parses overrides like "training.epochs=5" against the defaults alone.
  static ExperimentConfig from_overrides(const std::vector<std::string>& overrides);

  void validate() const;

  Paradigm paradigm() const { return paradigm_from_string(training.paradigm); }
  LossVariant loss_variant() const { return loss_variant_from_string(training.loss_variant); }
  int frames() const {
    return paradigm() == Paradigm::Controlled ? training.frames_controlled
                                              : training.frames_uncontrolled;
  }

  // Canonical JSON text with keys sorted; out_dir excluded (artifacts must
  // hash identically wherever they are written).
  std::string canonical_text() const;
  ConfigHash digest() const;
};

}  // namespace cdr
