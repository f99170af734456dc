#pragma once

#include <string>
#include <vector>

#include "cdr/autodiff.hpp"
#include "cdr/config.hpp"
#include "cdr/contrastive.hpp"
#include "cdr/models.hpp"
#include "cdr/renderer.hpp"
#include "cdr/worldsim.hpp"

namespace cdr {

// Greedy 1-step MPC choice: sample `config.candidates` pushes from the
// controlled action distribution, run each through the forward model, return
// the one whose predicted latent is closest to z_goal (ties to the lowest
// candidate index). z_t and z_goal are [1, latent].
ActionPush plan_step(ParamStore& model, const ModelDims& dims, const Tensor& z_t,
                     const Tensor& z_goal, Rng& rng, const PlanningConfig& config,
                     const SceneConfig& scene, SimilarityKind distance);

struct PlanningEpisode {
  double initial_distance = 0.0;
  double final_distance = 0.0;
  int steps_taken = 0;
  bool reached = false;  // came within goal_tolerance
  WorldState goal_state;
  DomainParams run_domain;
  std::vector<WorldState> trajectory;  // includes the initial state
};

// Renders and encodes the goal once, then loops render-encode-plan-step for
// at most max_steps, stopping early inside goal_tolerance. With
// random_policy the planner is bypassed and actions are drawn blindly,
// which is the comparison baseline.
PlanningEpisode run_planning_episode(ParamStore& model, const ModelDims& dims,
                                     const WorldState& initial, const WorldState& goal,
                                     const DomainParams& run_domain,
                                     const DomainParams& goal_domain,
                                     const PlanningConfig& config, const SceneConfig& scene,
                                     SimilarityKind distance, int resolution, uint64_t seed,
                                     bool random_policy = false);

struct PlanningReport {
  std::string goal_mode;  // "same" | "different"
  int episodes = 0;
  double mean_initial = 0.0;
  double mean_final = 0.0;
  double random_mean_final = 0.0;  // random-action baseline, same episodes
  int reached = 0;
  std::vector<PlanningEpisode> details;
};

// Goal states are made by scrambling the initial state with random pushes,
// so every goal is reachable. The random baseline reuses each episode's
// initial state, goal, and domains.
PlanningReport planning_eval(ParamStore& model, const ModelDims& dims,
                             const ExperimentConfig& config, const FamilyPool& families,
                             bool different_goal_domain, uint64_t seed);

std::string to_line(const PlanningReport& r);

}  // namespace cdr
