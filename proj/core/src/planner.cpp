#include "cdr/planner.hpp"

#include <cmath>
#include <cstdio>

#include "cdr/datagen.hpp"
#include "cdr/evaluation.hpp"
#include "cdr/util.hpp"

namespace cdr {

ActionPush plan_step(ParamStore& model, const ModelDims& dims, const Tensor& z_t,
                     const Tensor& z_goal, Rng& rng, const PlanningConfig& config,
                     const SceneConfig& scene, SimilarityKind distance) {
  CDR_REQUIRE(config.candidates >= 1, "plan_step needs at least one candidate");
  CDR_REQUIRE(z_t.rank() == 2 && z_t.dim(0) == 1 && z_t.dim(1) == dims.latent_dim,
              "z_t must be [1,", dims.latent_dim, "], got ", shape_str(z_t.shape));
  CDR_REQUIRE(z_goal.same_shape(z_t), "z_goal must match z_t, got ", shape_str(z_goal.shape));

  const int n = config.candidates;
  std::vector<ActionPush> candidates(n);
  Tensor actions({n, 2});
  for (int i = 0; i < n; ++i) {
    candidates[i] = sample_action(rng, scene);
    actions.at(i, 0) = candidates[i].force.x;
    actions.at(i, 1) = candidates[i].force.y;
  }

  Tensor z_tiled({n, dims.latent_dim});
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < dims.latent_dim; ++k) z_tiled.at(i, k) = z_t.at(0, k);

  const Tensor* w =
      model.contains(kBilinearParamName) ? &model.value(kBilinearParamName) : nullptr;
  const Tensor predicted = predict_next_latents(model, dims, z_tiled, actions);

  int best = 0;
  double best_score = pair_score(predicted, 0, z_goal, 0, distance, w);
  for (int i = 1; i < n; ++i) {
    const double s = pair_score(predicted, i, z_goal, 0, distance, w);
    if (s > best_score) {
      best_score = s;
      best = i;
    }
  }
  return candidates[best];
}

PlanningEpisode run_planning_episode(ParamStore& model, const ModelDims& dims,
                                     const WorldState& initial, const WorldState& goal,
                                     const DomainParams& run_domain,
                                     const DomainParams& goal_domain,
                                     const PlanningConfig& config, const SceneConfig& scene,
                                     SimilarityKind distance, int resolution, uint64_t seed,
                                     bool random_policy) {
  PlanningEpisode ep;
  ep.goal_state = goal;
  ep.run_domain = run_domain;
  ep.initial_distance = object_distance(initial, goal);
  ep.trajectory.push_back(initial);

  const Tensor z_goal =
      encode_images(model, dims, observations_to_tensor({render(goal, goal_domain, resolution)}));

  Rng rng(seed);
  WorldState state = initial;
  double dist = ep.initial_distance;
  for (int s = 0; s < config.max_steps && dist > config.goal_tolerance; ++s) {
    ActionPush action;
    if (random_policy) {
      action = sample_action(rng, scene);
    } else {
      const Tensor z_t = encode_images(
          model, dims, observations_to_tensor({render(state, run_domain, resolution)}));
      action = plan_step(model, dims, z_t, z_goal, rng, config, scene, distance);
    }
    state = step(state, action, kFrameDt);
    ep.trajectory.push_back(state);
    ++ep.steps_taken;
    dist = object_distance(state, goal);
  }
  ep.final_distance = dist;
  ep.reached = dist <= config.goal_tolerance;
  return ep;
}

PlanningReport planning_eval(ParamStore& model, const ModelDims& dims,
                             const ExperimentConfig& config, const FamilyPool& families,
                             bool different_goal_domain, uint64_t seed) {
  const PlanningConfig& plan = config.planning;
  const SceneConfig& scene = config.scene;
  const int resolution = config.renderer.resolution;
  const SimilarityKind distance = similarity_from_string(plan.distance);

  PlanningReport report;
  report.goal_mode = different_goal_domain ? "different" : "same";
  report.episodes = plan.episodes;

  double sum_initial = 0.0, sum_final = 0.0, sum_random = 0.0;
  for (int e = 0; e < plan.episodes; ++e) {
    Rng state_rng(derive_seed(seed, str_cat("plan/state/", e)));
    Rng scramble_rng(derive_seed(seed, str_cat("plan/scramble/", e)));
    Rng domain_rng(derive_seed(seed, str_cat("plan/domain/", e)));

    const WorldState initial = sample_initial_state(state_rng, scene);
    WorldState goal = initial;
    for (int a = 0; a < plan.scramble_actions; ++a)
      goal = step(goal, sample_action(scramble_rng, scene), kFrameDt);

    const DomainParams run_domain = sample_domain(domain_rng, families, scene.body_count);
    DomainParams goal_domain = run_domain;
    if (different_goal_domain) {
      goal_domain = sample_domain(domain_rng, families, scene.body_count);
      while (domain_fingerprint(goal_domain) == domain_fingerprint(run_domain))
        goal_domain = sample_domain(domain_rng, families, scene.body_count);
    }

    const uint64_t step_seed = derive_seed(seed, str_cat("plan/actions/", e));
    PlanningEpisode planned =
        run_planning_episode(model, dims, initial, goal, run_domain, goal_domain, plan, scene,
                             distance, resolution, step_seed);
    const PlanningEpisode random =
        run_planning_episode(model, dims, initial, goal, run_domain, goal_domain, plan, scene,
                             distance, resolution, derive_seed(step_seed, "random"),
                             /*random_policy=*/true);

    sum_initial += planned.initial_distance;
    sum_final += planned.final_distance;
    sum_random += random.final_distance;
    report.reached += planned.reached;
    report.details.push_back(std::move(planned));
  }

  report.mean_initial = sum_initial / plan.episodes;
  report.mean_final = sum_final / plan.episodes;
  report.random_mean_final = sum_random / plan.episodes;
  return report;
}

std::string to_line(const PlanningReport& r) {
  char buf[280];
  std::snprintf(buf, sizeof(buf),
                "planning goal=%s episodes=%d initial=%.17g final=%.17g random=%.17g reached=%d",
                r.goal_mode.c_str(), r.episodes, r.mean_initial, r.mean_final,
                r.random_mean_final, r.reached);
  return buf;
}

}  // namespace cdr
