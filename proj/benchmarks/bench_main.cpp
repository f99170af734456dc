#include <benchmark/benchmark.h>

#include <optional>

#include "cdr/contrastive.hpp"
#include "cdr/datagen.hpp"
#include "cdr/models.hpp"
#include "cdr/planner.hpp"
#include "cdr/renderer.hpp"
#include "cdr/rng.hpp"
#include "cdr/worldsim.hpp"

using namespace cdr;

namespace {

FamilyPool all_families() {
  FamilyPool pool;
  for (int f = 0; f < kTextureFamilyCount; ++f) pool.push_back(static_cast<TextureFamily>(f));
  return pool;
}

struct SceneFixture {
  WorldState state;
  DomainParams domain;
  SceneFixture() {
    Rng rng(42);
    const SceneConfig scene;
    state = sample_initial_state(rng, scene);
    domain = sample_domain(rng, all_families(), scene.body_count);
  }
};

Tensor random_tensor(Rng& rng, std::vector<int> shape) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.normal();
  return t;
}

void BM_RenderScene(benchmark::State& state) {
  const SceneFixture fx;
  const int res = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(render(fx.state, fx.domain, res));
  }
}
BENCHMARK(BM_RenderScene)->Arg(16)->Arg(32)->Arg(64);

void BM_PhysicsStep(benchmark::State& state) {
  const SceneFixture fx;
  Rng rng(7);
  const SceneConfig scene;
  const ActionPush push = sample_action(rng, scene);
  WorldState s = fx.state;
  for (auto _ : state) {
    s = step(s, push, kFrameDt);
    benchmark::DoNotOptimize(s);
  }
}
BENCHMARK(BM_PhysicsStep);

void BM_EncoderForward(benchmark::State& state) {
  ModelDims dims;
  Rng rng(11);
  ParamStore store(3);
  const Tensor images = random_tensor(rng, {16, 3, dims.resolution, dims.resolution});
  encode_images(store, dims, images);  // create params outside the loop
  for (auto _ : state) {
    benchmark::DoNotOptimize(encode_images(store, dims, images));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_EncoderBackward(benchmark::State& state) {
  ModelDims dims;
  Rng rng(13);
  ParamStore store(5);
  const Tensor images = random_tensor(rng, {16, 3, dims.resolution, dims.resolution});
  for (auto _ : state) {
    Tape tape(store);
    const Value loss = tape.sum(encode(tape, tape.input(images), dims));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.param_grad("enc.fc2.w"));
  }
}
BENCHMARK(BM_EncoderBackward);

void BM_InfoNce(benchmark::State& state) {
  Rng rng(17);
  const Tensor preds = random_tensor(rng, {64, 8});
  const Tensor labels = random_tensor(rng, {64, 8});
  for (auto _ : state) {
    benchmark::DoNotOptimize(cdr_loss(preds, labels, SimilarityKind::DotExp));
  }
}
BENCHMARK(BM_InfoNce);

void BM_PlanStep(benchmark::State& state) {
  ModelDims dims;
  const SceneConfig scene;
  PlanningConfig plan;
  plan.candidates = static_cast<int>(state.range(0));
  ParamStore store(23);
  Rng lat(3);
  const Tensor z_t = random_tensor(lat, {1, dims.latent_dim});
  const Tensor z_goal = random_tensor(lat, {1, dims.latent_dim});
  {
    Tensor warm_z({1, dims.latent_dim}), warm_a({1, 2});
    predict_next_latents(store, dims, warm_z, warm_a);
  }
  Rng rng(29);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        plan_step(store, dims, z_t, z_goal, rng, plan, scene, SimilarityKind::NegL2));
  }
}
BENCHMARK(BM_PlanStep)->Arg(64)->Arg(1000);

void BM_BuildBatch(benchmark::State& state) {
  ExperimentConfig cfg;
  cfg.training.episodes = 64;
  const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 64,
                                      cfg.training.frames_controlled);
  BatchConfig bc;
  Rng rng(31);
  for (auto _ : state) {
    benchmark::DoNotOptimize(build_cdr_batch(ds, rng, bc, Paradigm::Controlled));
  }
}
BENCHMARK(BM_BuildBatch);

}  // namespace

BENCHMARK_MAIN();
