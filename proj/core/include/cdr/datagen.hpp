#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdr/config.hpp"
#include "cdr/renderer.hpp"
#include "cdr/tensor.hpp"
#include "cdr/worldsim.hpp"

namespace cdr {

enum class EpisodeKind : uint8_t { Uncontrolled = 0, Controlled = 1 };
const char* to_string(EpisodeKind kind);

// One trajectory plus its two independently sampled appearance draws.
// domain_a is the "native" appearance e; domain_b is the intervention e'.
struct PairedEpisode {
  uint64_t seed = 0;
  std::vector<WorldState> states;   // length T
  std::vector<ActionPush> actions;  // length T-1 for controlled, empty otherwise
  DomainParams domain_a;
  DomainParams domain_b;
};

struct Dataset {
  std::string split = "train";  // train | val | test
  EpisodeKind kind = EpisodeKind::Controlled;
  FamilyPool families;  // pool the domains were sampled from
  int frames = 0;       // uniform per-episode T
  int body_count = 0;
  ConfigHash config_hash{};
  std::vector<PairedEpisode> episodes;
};

// Both generators are deterministic in (seed, frames, scene, pool); every
// random quantity comes from its own named stream so draws never interleave.
PairedEpisode gen_uncontrolled_episode(uint64_t seed, int frames, const SceneConfig& scene,
                                       const FamilyPool& pool);
PairedEpisode gen_controlled_episode(uint64_t seed, int frames, const SceneConfig& scene,
                                     const FamilyPool& pool);

// True when re-stepping from states[0] under the recorded actions reproduces
// every stored state bitwise.
bool validate_replay(const PairedEpisode& episode);

// Episode seeds derive from (config.seed, split, kind, index), so differently
// tagged datasets are disjoint by construction.
Dataset generate_dataset(const ExperimentConfig& config, EpisodeKind kind,
                         const std::string& split, int episode_count, int frames);

struct BatchConfig {
  int batch = 64;
  int resolution = 32;
  int context_len = 4;   // uncontrolled context length C
  int horizon = 6;       // uncontrolled prediction horizon K
  double within_fraction = 0.5;  // chance a row reuses the previous row's episode
};

// Controlled:   pred_images [N,3,H,W], actions [N,2], label_images [N,3,H,W].
// Uncontrolled: pred_images [C*N,3,H,W] time-major (row c*N+i is context frame
// c of item i), label_images [K*N,3,H,W] horizon-major, actions empty.
struct Batch {
  Paradigm paradigm = Paradigm::Controlled;
  int batch = 0;
  int context_len = 0;
  int horizon = 1;
  Tensor pred_images;
  Tensor actions;
  Tensor label_images;
  std::vector<uint64_t> pred_fingerprints;   // per item
  std::vector<uint64_t> label_fingerprints;  // per item
  std::vector<int> episode_indices;          // per item, for sampling tests
};

// Labels rendered under the episode's independently sampled domain_b.
Batch build_cdr_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                      Paradigm paradigm);
// Labels rendered under the same domain_a as the prediction inputs.
Batch build_naive_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                        Paradigm paradigm);
// One fresh domain is sampled and every image in the batch uses it.
Batch build_same_domain_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                              Paradigm paradigm);

// Number of distinct (episode, start) choices a batch row can take.
int64_t available_transitions(const Dataset& dataset, Paradigm paradigm, const BatchConfig& config);

// Stacks H*W*3 observations into [N,3,H,W].
Tensor observations_to_tensor(const std::vector<Observation>& observations);

void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace cdr
