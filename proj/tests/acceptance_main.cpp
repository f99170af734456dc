#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef _WIN32
#include <sys/wait.h>
#endif

#include "cdr/config.hpp"
#include "cdr/contrastive.hpp"
#include "cdr/datagen.hpp"
#include "cdr/evaluation.hpp"
#include "cdr/models.hpp"
#include "cdr/planner.hpp"
#include "cdr/prop1.hpp"
#include "cdr/rng.hpp"
#include "cdr/training.hpp"
#include "cdr/worldsim.hpp"

namespace fs = std::filesystem;
using namespace cdr;

namespace {

struct Outcome {
  bool pass = false;
  std::string details;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list args;
  va_start(args, f);
  std::vsnprintf(buf, sizeof(buf), f, args);
  va_end(args);
  return buf;
}

bool report(int n, const char* name, const Outcome& o) {
  std::printf("criterion %d: %s — %s (%s)\n", n, o.pass ? "PASS" : "FAIL", name,
              o.details.c_str());
  std::fflush(stdout);
  return o.pass;
}

Tensor random_tensor(Rng& rng, std::vector<int> shape, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

FamilyPool all_families() {
  FamilyPool pool;
  for (int f = 0; f < kTextureFamilyCount; ++f) pool.push_back(static_cast<TextureFamily>(f));
  return pool;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- criterion 1

Outcome criterion_gradients() {
  const auto start = Clock::now();
  constexpr double kTol = 1e-4;
  std::vector<std::pair<std::string, GradCheckResult>> checks;

  ModelDims dims;  // default widths at 32x32
  Rng rng(7001);

  {
    ParamStore store(8101);
    const Tensor images = random_tensor(rng, {4, 3, dims.resolution, dims.resolution}, 0.3);
    const Tensor mix = random_tensor(rng, {4, dims.latent_dim});
    auto loss = [&](Tape& t) {
      return t.sum(t.mul(encode(t, t.input(images), dims), t.input(mix)));
    };
    checks.emplace_back("encoder", grad_check(store, loss, 11, 160));
  }
  {
    ParamStore store(8102);
    const Tensor z = random_tensor(rng, {8, dims.latent_dim});
    const Tensor actions = random_tensor(rng, {8, 2}, 10.0);
    const Tensor mix = random_tensor(rng, {8, dims.latent_dim});
    auto loss = [&](Tape& t) {
      return t.sum(
          t.mul(predict_next(t, t.input(z), t.input(actions), dims), t.input(mix)));
    };
    checks.emplace_back("forward", grad_check(store, loss, 13, 160));
  }
  {
    ParamStore store(8103);
    const int batch = 5, seq = dims.context_len;
    const Tensor z_seq = random_tensor(rng, {seq * batch, dims.latent_dim});
    std::vector<Tensor> mixes;
    for (int k = 0; k < dims.horizon; ++k)
      mixes.push_back(random_tensor(rng, {batch, dims.latent_dim}));
    auto loss = [&](Tape& t) {
      const std::vector<Value> heads =
          predict_multistep(t, t.input(z_seq), seq, batch, dims);
      Value acc = t.sum(t.mul(heads[0], t.input(mixes[0])));
      for (size_t k = 1; k < heads.size(); ++k)
        acc = t.add(acc, t.sum(t.mul(heads[k], t.input(mixes[k]))));
      return acc;
    };
    checks.emplace_back("gru", grad_check(store, loss, 17, 160));
  }
  {
    ParamStore store(8104);
    store.set("acc.p", random_tensor(rng, {8, 6}, 0.7));
    store.set("acc.l", random_tensor(rng, {8, 6}, 0.7));
    for (SimilarityKind kind : {SimilarityKind::DotExp, SimilarityKind::Bilinear,
                                SimilarityKind::NegL2, SimilarityKind::Cosine}) {
      auto loss = [&](Tape& t) {
        const Value p = t.param("acc.p", {8, 6}, Init::Zero);
        const Value l = t.param("acc.l", {8, 6}, Init::Zero);
        return contrastive_loss_graph(t, p, l, kind);
      };
      checks.emplace_back(fmt("loss/%s", to_string(kind)),
                          grad_check(store, loss, 19 + static_cast<int>(kind), 120));
    }
    auto multi = [&](Tape& t) {
      const Value p = t.param("acc.p", {8, 6}, Init::Zero);
      const Value l = t.param("acc.l", {8, 6}, Init::Zero);
      const Value a = contrastive_loss_graph(t, p, l, SimilarityKind::DotExp);
      const Value b = contrastive_loss_graph(t, p, l, SimilarityKind::NegL2);
      return t.scale(t.add(a, b), 0.5);
    };
    checks.emplace_back("loss/multi-horizon", grad_check(store, multi, 29, 120));
  }

  double worst = 0.0;
  int skipped = 0;
  std::string worst_name;
  bool pass = true;
  for (const auto& [name, r] : checks) {
    skipped += r.skipped;
    if (r.max_rel_error > worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
    if (r.max_rel_error > kTol || r.checked == 0) pass = false;
  }
  const double elapsed = seconds_since(start);
  if (elapsed >= 60.0) pass = false;
  return {pass, fmt("max_rel=%.3g worst=%s tol=%.0e kink_skipped=%d elapsed=%.1fs", worst,
                    worst_name.c_str(), kTol, skipped, elapsed)};
}

// ---------------------------------------------------------------- criterion 2

Outcome criterion_loss_identities() {
  constexpr double kTol = 1e-10;
  bool pass = true;
  std::string note;

  const Tensor uniform = Tensor::full({7, 7}, 3.14);
  const double u_err = std::abs(info_nce(uniform) - std::log(7.0));
  pass = pass && u_err <= kTol;

  const double single = std::abs(info_nce(Tensor({1, 1}, {5.0})));
  pass = pass && single <= kTol;

  const Tensor pinned({2, 2}, {2.0, 1.0, 1.0, 2.0});
  const double p_err = std::abs(info_nce(pinned) - (-std::log(2.0 / 3.0)));
  pass = pass && p_err <= kTol;

  Rng rng(7002);
  int mismatches = 0;
  for (SimilarityKind kind : {SimilarityKind::DotExp, SimilarityKind::Bilinear,
                              SimilarityKind::NegL2, SimilarityKind::Cosine}) {
    const Tensor preds = random_tensor(rng, {16, 8});
    const Tensor labels = random_tensor(rng, {16, 8});
    const Tensor w = random_tensor(rng, {8, 8}, 0.4);
    const Tensor* wp = kind == SimilarityKind::Bilinear ? &w : nullptr;
    if (cdr_loss(preds, labels, kind, wp) != naive_dr_loss(preds, labels, kind, wp))
      ++mismatches;
  }
  pass = pass && mismatches == 0;

  ExperimentConfig cfg;
  cfg.renderer.resolution = 16;
  cfg.training.episodes = 12;
  cfg.training.frames_controlled = 2;
  Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 12, 2);
  for (PairedEpisode& ep : ds.episodes) ep.domain_b = ep.domain_a;
  BatchConfig bc;
  bc.batch = 12;
  bc.resolution = 16;
  Rng r1(5), r2(5);
  const Batch b_cdr = build_cdr_batch(ds, r1, bc, Paradigm::Controlled);
  const Batch b_naive = build_naive_batch(ds, r2, bc, Paradigm::Controlled);
  const bool batches_equal = b_cdr.pred_images.data == b_naive.pred_images.data &&
                             b_cdr.label_images.data == b_naive.label_images.data &&
                             b_cdr.episode_indices == b_naive.episode_indices;
  pass = pass && batches_equal;

  note = fmt("uniform_err=%.2g single=%.2g pinned_err=%.2g fn_mismatch=%d "
             "intervened_batch_equal=%d",
             u_err, single, p_err, mismatches, batches_equal ? 1 : 0);
  return {pass, note};
}

// ---------------------------------------------------------------- criterion 3

Outcome criterion_init_loss() {
  const auto start = Clock::now();
  constexpr double kTol = 0.1;
  const double target = std::log(64.0);

  ExperimentConfig base;
  base.training.episodes = 200;
  base.training.epochs = 0;

  const Dataset controlled = generate_dataset(base, EpisodeKind::Controlled, "train", 200,
                                              base.training.frames_controlled);
  const Dataset uncontrolled = generate_dataset(base, EpisodeKind::Uncontrolled, "train", 200,
                                                base.training.frames_uncontrolled);

  bool pass = true;
  std::string note;
  for (const char* variant : {"cdr", "naive", "same_domain"}) {
    ExperimentConfig cfg = base;
    cfg.training.loss_variant = variant;
    const TrainResult r = train(cfg, controlled);
    const double gap = std::abs(r.history.at(0).train_loss - target);
    pass = pass && gap <= kTol;
    note += fmt("%s=%.4f ", variant, r.history.at(0).train_loss);
  }
  {
    ExperimentConfig cfg = base;
    cfg.training.paradigm = "uncontrolled";
    const TrainResult r = train(cfg, uncontrolled);
    const double gap = std::abs(r.history.at(0).train_loss - target);
    pass = pass && gap <= kTol;
    note += fmt("uncontrolled=%.4f ", r.history.at(0).train_loss);
  }
  note += fmt("target=%.4f tol=%.1f elapsed=%.1fs", target, kTol, seconds_since(start));
  return {pass, note};
}

// ---------------------------------------------------------------- criterion 4

Outcome criterion_separable_identifiability() {
  const auto start = Clock::now();
  ExperimentConfig cfg;
  const Prop1Config pc = cfg.evaluation.prop1;  // 10 trials, full step budget

  const Prop1Report indep =
      prop1_experiment(Prop1Regime::Independent, pc, derive_seed(1, "accept/prop1"));
  const Prop1Report dep =
      prop1_experiment(Prop1Regime::Dependent, pc, derive_seed(1, "accept/prop1"));

  int small_ratio = 0;
  std::vector<double> gaps;
  for (const Prop1Trial& t : indep.trials) {
    if (t.ratio <= 0.05) ++small_ratio;
    gaps.push_back(std::abs(t.loss_clamped - t.loss_unrestricted) /
                   std::max(std::abs(t.loss_unrestricted), 1e-12));
  }
  std::sort(gaps.begin(), gaps.end());
  const double median_gap = gaps[gaps.size() / 2];

  const double elapsed = seconds_since(start);
  const bool pass = small_ratio >= 8 && dep.median_ratio >= 10.0 * indep.median_ratio &&
                    median_gap <= 0.02 && elapsed < 300.0;
  return {pass, fmt("ratio<=0.05: %d/10 indep_median=%.4g dep_median=%.4g clamp_gap=%.4g "
                    "elapsed=%.1fs",
                    small_ratio, indep.median_ratio, dep.median_ratio, median_gap, elapsed)};
}

// --------------------------------------------------------- criteria 5 through 8

struct TrainedPair {
  ExperimentConfig cfg;
  TrainResult cdr;
  TrainResult naive;
  double cdr_seconds = 0.0;
  double naive_seconds = 0.0;
};

TrainedPair train_matched_models() {
  TrainedPair out;
  out.cfg = ExperimentConfig{};  // desk-scale defaults: 2000 episodes, 32x32, 30 epochs
  const Dataset ds =
      generate_dataset(out.cfg, EpisodeKind::Controlled, "train", out.cfg.training.episodes,
                       out.cfg.training.frames_controlled);

  auto t0 = Clock::now();
  ExperimentConfig cdr_cfg = out.cfg;
  cdr_cfg.training.loss_variant = "cdr";
  out.cdr = train(cdr_cfg, ds);
  out.cdr_seconds = seconds_since(t0);

  t0 = Clock::now();
  ExperimentConfig naive_cfg = out.cfg;
  naive_cfg.training.loss_variant = "naive";
  out.naive = train(naive_cfg, ds);
  out.naive_seconds = seconds_since(t0);
  return out;
}

ModelDims dims_of(const ExperimentConfig& cfg) {
  ModelDims dims = cfg.model;
  dims.resolution = cfg.renderer.resolution;
  return dims;
}

Outcome criterion_invariance(TrainedPair& models) {
  const ExperimentConfig& cfg = models.cfg;
  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  const std::vector<InvariancePair> pairs =
      make_invariance_pairs(cfg.scene, train_fams, cfg.evaluation.invariance_pairs,
                            derive_seed(cfg.evaluation.seed, "invariance"));

  const ModelDims dims = dims_of(cfg);
  const InvarianceReport inv_cdr =
      invariance_eval(models.cdr.params, dims, pairs, cfg.renderer.resolution);
  const InvarianceReport inv_naive =
      invariance_eval(models.naive.params, dims, pairs, cfg.renderer.resolution);

  const bool pass = inv_cdr.mean_cosine >= inv_naive.mean_cosine + 0.05 &&
                    inv_cdr.mean_mse < inv_naive.mean_mse && inv_cdr.mean_cosine >= 0.8 &&
                    models.cdr_seconds < 1800.0 && models.naive_seconds < 1800.0;
  return {pass,
          fmt("cdr_cos=%.4f naive_cos=%.4f cdr_mse=%.4g naive_mse=%.4g train=%.0fs/%.0fs",
              inv_cdr.mean_cosine, inv_naive.mean_cosine, inv_cdr.mean_mse,
              inv_naive.mean_mse, models.cdr_seconds, models.naive_seconds)};
}

Outcome criterion_retrieval(TrainedPair& models) {
  const auto start = Clock::now();
  const ExperimentConfig& cfg = models.cfg;
  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  const int res = cfg.renderer.resolution;

  const SceneSet pool = make_scene_set(cfg.scene, train_fams, cfg.evaluation.pool_size, res,
                                       derive_seed(cfg.evaluation.seed, "pool"), "pool");
  const SceneSet queries =
      make_scene_set(cfg.scene, ood_fams, cfg.evaluation.query_count, res,
                     derive_seed(cfg.evaluation.seed, "query/ood"), "query");

  const ModelDims dims = dims_of(cfg);
  const SimilarityKind metric = similarity_from_string(cfg.evaluation.retrieval_similarity);
  const uint64_t bseed = derive_seed(cfg.evaluation.seed, "baseline");
  const RetrievalReport r_cdr =
      retrieval_eval(models.cdr.params, dims, queries, pool, metric, "ood", bseed);
  const RetrievalReport r_naive =
      retrieval_eval(models.naive.params, dims, queries, pool, metric, "ood", bseed);

  const double elapsed = seconds_since(start);
  const bool pass = r_cdr.mean_iou > r_naive.mean_iou &&
                    r_cdr.mean_iou > r_cdr.baseline_iou &&
                    r_naive.mean_iou > r_naive.baseline_iou &&
                    r_cdr.mean_distance < r_naive.mean_distance && elapsed < 600.0;
  return {pass, fmt("cdr_iou=%.4f naive_iou=%.4f baseline=%.4f cdr_dist=%.4f "
                    "naive_dist=%.4f elapsed=%.0fs",
                    r_cdr.mean_iou, r_naive.mean_iou, r_cdr.baseline_iou, r_cdr.mean_distance,
                    r_naive.mean_distance, elapsed)};
}

Outcome criterion_mi_bound(const TrainedPair& models) {
  const double mi = mi_lower_bound(models.cdr.best_val_loss, models.cfg.training.batch_size);
  return {mi > 1.0, fmt("mi=%.4f nats val_loss=%.4f n=%d", mi, models.cdr.best_val_loss,
                        models.cfg.training.batch_size)};
}

Outcome criterion_planning(TrainedPair& models) {
  const auto start = Clock::now();
  const ExperimentConfig& cfg = models.cfg;
  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  const ModelDims dims = dims_of(cfg);
  const uint64_t seed = derive_seed(cfg.seed, "accept/planning");

  const PlanningReport cdr_same =
      planning_eval(models.cdr.params, dims, cfg, train_fams, false, seed);
  const PlanningReport cdr_diff =
      planning_eval(models.cdr.params, dims, cfg, train_fams, true, seed);
  const PlanningReport naive_same =
      planning_eval(models.naive.params, dims, cfg, train_fams, false, seed);
  const PlanningReport naive_diff =
      planning_eval(models.naive.params, dims, cfg, train_fams, true, seed);

  auto rel_deg = [](const PlanningReport& same, const PlanningReport& diff) {
    return (diff.mean_final - same.mean_final) / std::max(same.mean_final, 1e-9);
  };
  const double deg_cdr = rel_deg(cdr_same, cdr_diff);
  const double deg_naive = rel_deg(naive_same, naive_diff);

  const double elapsed = seconds_since(start);
  const bool pass = cdr_same.mean_final < 0.5 * cdr_same.mean_initial &&
                    cdr_same.mean_final < cdr_same.random_mean_final &&
                    deg_cdr < deg_naive && elapsed < 600.0;
  return {pass, fmt("final=%.4f initial=%.4f random=%.4f deg_cdr=%.3f deg_naive=%.3f "
                    "elapsed=%.0fs",
                    cdr_same.mean_final, cdr_same.mean_initial, cdr_same.random_mean_final,
                    deg_cdr, deg_naive, elapsed)};
}

// ---------------------------------------------------------------- criterion 9

int run_cli(const std::string& args, const fs::path& log_dir, int index) {
  fs::create_directories(log_dir);
  const fs::path out = log_dir / fmt("step%d.out", index);
  const fs::path err = log_dir / fmt("step%d.err", index);
  const std::string cmd = std::string("\"") + CDR_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + err.string() + "\"";
  const int raw = std::system(cmd.c_str());
#ifndef _WIN32
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
#else
  return raw;
#endif
}

Outcome criterion_determinism() {
  const auto start = Clock::now();
  const fs::path root = fs::temp_directory_path() / "cdr_acceptance" / "determinism";
  fs::remove_all(root);

  auto run_pipeline = [&](const fs::path& dir) -> bool {
    std::string sets = " --set out_dir=" + dir.string();
    sets += " --set renderer.resolution=16 --set training.episodes=60";
    sets += " --set training.frames_controlled=8 --set training.epochs=2";
    sets += " --set training.batch_size=16 --set training.val_fraction=0.2";
    sets += " --set model.latent_dim=6 --set model.conv1_channels=4";
    sets += " --set model.conv2_channels=8 --set model.fc_hidden=32";
    sets += " --set model.action_hidden=16 --set model.action_code_dim=8";
    sets += " --set model.trunk_hidden=16 --set model.gru_hidden=8";
    sets += " --set model.horizon=2 --set model.context_len=2";
    int step = 0;
    if (run_cli("gen-data" + sets + " --out " + (dir / "data.cdrd").string(), dir, ++step) != 0)
      return false;
    if (run_cli("train" + sets + " --dataset " + (dir / "data.cdrd").string() + " --out " +
                    (dir / "model.cdrw").string() + " --metrics " +
                    (dir / "metrics.log").string(),
                dir, ++step) != 0)
      return false;
    return run_cli("eval-invariance" + sets + " --checkpoint " + (dir / "model.cdrw").string(),
                   dir, ++step) == 0;
  };

  const bool ok1 = run_pipeline(root / "run1");
  const bool ok2 = run_pipeline(root / "run2");
  if (!ok1 || !ok2)
    return {false, fmt("pipeline exit failure run1=%d run2=%d", ok1 ? 0 : 1, ok2 ? 0 : 1)};

  int diffs = 0;
  std::string detail;
  for (const char* file : {"data.cdrd", "model.cdrw", "metrics.log", "invariance.txt"}) {
    const std::string a = slurp(root / "run1" / file);
    const std::string b = slurp(root / "run2" / file);
    const bool same = !a.empty() && a == b;
    if (!same) ++diffs;
    detail += fmt("%s=%s ", file, same ? "equal" : "DIFFERS");
  }
  return {diffs == 0, detail + fmt("elapsed=%.0fs", seconds_since(start))};
}

// --------------------------------------------------------------- criterion 10

Outcome criterion_physics() {
  const auto start = Clock::now();
  const SceneConfig scene;  // defaults, drag 2.0, restitution 0.9
  const FamilyPool pool = all_families();
  const int episodes = 1000, frames = 30;

  int containment = 0, overlap = 0, dissipation = 0, momentum = 0, replay = 0;
  int64_t momentum_checked = 0;

  for (int e = 0; e < episodes; ++e) {
    const PairedEpisode ep =
        gen_uncontrolled_episode(derive_seed(99, fmt("accept/phys/%d", e)), frames, scene, pool);
    if (!validate_replay(ep)) ++replay;

    for (const WorldState& s : ep.states) {
      if (!contained_in_frame(s)) ++containment;
      if (!no_pair_overlap(s)) ++overlap;
    }
    for (size_t t = 0; t + 1 < ep.states.size(); ++t) {
      const double ke0 = kinetic_energy(ep.states[t]);
      const double ke1 = kinetic_energy(ep.states[t + 1]);
      if (ke1 > ke0 * (1.0 + 1e-12) + 1e-15) ++dissipation;

      StepProbe probe;
      const WorldState next = step(ep.states[t], std::nullopt, kFrameDt, &probe);
      (void)next;
      if (!probe.wall_contact && !probe.pair_contact) {
        ++momentum_checked;
        const double h = kFrameDt / kSubsteps;
        const double factor = std::pow(1.0 - ep.states[t].drag_coeff * h, kSubsteps);
        const Vec2 p0 = total_momentum(ep.states[t]);
        const Vec2 p1 = total_momentum(ep.states[t + 1]);
        const double tol_x = 1e-12 * std::max(1.0, std::abs(p0.x));
        const double tol_y = 1e-12 * std::max(1.0, std::abs(p0.y));
        if (std::abs(p1.x - p0.x * factor) > tol_x || std::abs(p1.y - p0.y * factor) > tol_y)
          ++momentum;
      }
    }
  }

  const bool pass = containment == 0 && overlap == 0 && dissipation == 0 && momentum == 0 &&
                    replay == 0 && momentum_checked >= 1000;
  return {pass, fmt("episodes=%d containment=%d overlap=%d dissipation=%d momentum=%d "
                    "replay=%d drag_free_steps=%lld elapsed=%.0fs",
                    episodes, containment, overlap, dissipation, momentum, replay,
                    static_cast<long long>(momentum_checked), seconds_since(start))};
}

}  // namespace

int main() {
  int passed = 0, total = 0;
  auto run = [&](int n, const char* name, Outcome o) {
    ++total;
    if (report(n, name, o)) ++passed;
  };
  auto guarded = [&](int n, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, fmt("exception: %s", e.what())};
    }
    run(n, name, o);
  };

  guarded(1, "gradient-correctness", criterion_gradients);
  guarded(2, "infonce-identities", criterion_loss_identities);
  guarded(3, "init-loss-near-log-n", criterion_init_loss);
  guarded(4, "separable-identifiability", criterion_separable_identifiability);

  std::optional<TrainedPair> models;
  try {
    models = train_matched_models();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "matched training failed: %s\n", e.what());
  }
  if (models) {
    guarded(5, "invariance-direction", [&] { return criterion_invariance(*models); });
    guarded(6, "ood-retrieval-direction", [&] { return criterion_retrieval(*models); });
    guarded(7, "mi-lower-bound", [&] { return criterion_mi_bound(*models); });
    guarded(8, "latent-planning", [&] { return criterion_planning(*models); });
  } else {
    run(5, "invariance-direction", {false, "matched training unavailable"});
    run(6, "ood-retrieval-direction", {false, "matched training unavailable"});
    run(7, "mi-lower-bound", {false, "matched training unavailable"});
    run(8, "latent-planning", {false, "matched training unavailable"});
  }

  guarded(9, "pipeline-determinism", criterion_determinism);
  guarded(10, "physics-invariants", criterion_physics);

  std::printf("acceptance: %d/%d passed\n", passed, total);
  return passed == total ? 0 : 1;
}
