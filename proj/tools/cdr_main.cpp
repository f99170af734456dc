#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdr/checkpoint.hpp"
#include "cdr/config.hpp"
#include "cdr/datagen.hpp"
#include "cdr/evaluation.hpp"
#include "cdr/planner.hpp"
#include "cdr/ppm.hpp"
#include "cdr/prop1.hpp"
#include "cdr/training.hpp"
#include "cdr/util.hpp"

namespace fs = std::filesystem;
using namespace cdr;

namespace {

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  bool allow_hash_mismatch = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config_path, "experiment config file (JSON)")
      ->envname("CDR_CONFIG");
  cmd->add_option("--set", opts.sets, "override a leaf key, e.g. training.epochs=5");
  cmd->add_flag("--allow-hash-mismatch", opts.allow_hash_mismatch,
                "proceed when an artifact was produced under a different config");
}

ExperimentConfig load_config(const CommonOpts& opts) {
  if (opts.config_path.empty()) return ExperimentConfig::from_overrides(opts.sets);
  return ExperimentConfig::from_file(opts.config_path, opts.sets);
}

ModelDims dims_from(const ExperimentConfig& cfg) {
  ModelDims dims = cfg.model;
  dims.resolution = cfg.renderer.resolution;
  return dims;
}

// Identity is the loaded config (file plus --set overrides); per-invocation
// flags like --loss or --episodes select what to run inside that experiment
// and never shift the hash, so artifacts from flagged runs stay mutually
// consistent. Every command therefore fixes its digest before applying flags.
void check_hash(const ConfigHash& artifact, const ConfigHash& current, bool allow,
                const char* what) {
  if (artifact == current) return;
  const std::string msg = str_cat(what, " was produced under config ", hash_hex(artifact),
                                  " but the current config is ", hash_hex(current));
  if (!allow) throw std::runtime_error(msg + " (pass --allow-hash-mismatch to proceed)");
  std::fprintf(stderr, "warning: %s\n", msg.c_str());
}

void write_text_artifact(const std::string& path, const ConfigHash& digest,
                         const std::string& body) {
  const fs::path p(path);
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);  // fixed newlines on every platform
  if (!out) throw std::runtime_error(str_cat("cannot open ", path, " for writing"));
  out << "# config=" << hash_hex(digest) << "\n" << body;
  if (!out) throw std::runtime_error(str_cat("failed writing ", path));
}

void ensure_parent(const std::string& path) {
  const fs::path p(path);
  if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
}

std::string make_kind(Paradigm p, LossVariant v, SimilarityKind s) {
  return str_cat(to_string(p), ".", to_string(v), ".", to_string(s));
}

struct ArchInfo {
  Paradigm paradigm = Paradigm::Controlled;
  LossVariant variant = LossVariant::Cdr;
  SimilarityKind similarity = SimilarityKind::DotExp;
};

// A checkpoint is usable only if its arch string matches the configured
// model dims under some (paradigm, loss, similarity) tag; recovering the tag
// tells the caller how the model was trained.
ArchInfo parse_arch(const std::string& arch, const ModelDims& dims) {
  for (Paradigm p : {Paradigm::Controlled, Paradigm::Uncontrolled})
    for (LossVariant v : {LossVariant::Cdr, LossVariant::Naive, LossVariant::SameDomain})
      for (SimilarityKind s : {SimilarityKind::DotExp, SimilarityKind::Bilinear,
                               SimilarityKind::NegL2, SimilarityKind::Cosine})
        if (arch == arch_string(dims, make_kind(p, v, s))) return {p, v, s};
  throw std::runtime_error(
      str_cat("checkpoint arch \"", arch, "\" does not match the configured model"));
}

struct LoadedModel {
  ParamStore store{0};
  ArchInfo info;
};

LoadedModel load_model(const std::string& path, const ExperimentConfig& cfg, bool allow) {
  LoadedModel model{ParamStore(derive_seed(cfg.training.seed, "init")), {}};
  const CheckpointManifest manifest = load_checkpoint(path, model.store);
  check_hash(manifest.config_hash, cfg, allow, "checkpoint");
  model.info = parse_arch(manifest.arch, dims_from(cfg));
  return model;
}

std::string default_dataset_path(const ExperimentConfig& cfg, Paradigm paradigm) {
  return str_cat(cfg.out_dir, "/data_", to_string(paradigm), ".cdrd");
}

int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                               start)
      .count();
}

int cmd_gen_data(const CommonOpts& opts, const std::string& paradigm_flag, int episodes_flag,
                 const std::string& out_flag) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  const Paradigm paradigm =
      paradigm_from_string(paradigm_flag.empty() ? cfg.training.paradigm : paradigm_flag);
  const EpisodeKind kind =
      paradigm == Paradigm::Controlled ? EpisodeKind::Controlled : EpisodeKind::Uncontrolled;
  const int episodes = episodes_flag > 0 ? episodes_flag : cfg.training.episodes;
  const int frames = paradigm == Paradigm::Controlled ? cfg.training.frames_controlled
                                                      : cfg.training.frames_uncontrolled;
  const std::string out = out_flag.empty() ? default_dataset_path(cfg, paradigm) : out_flag;

  const Dataset ds = generate_dataset(cfg, kind, "train", episodes, frames);
  if (!validate_replay(ds.episodes.front()))
    throw std::runtime_error("generated episode failed replay validation");
  ensure_parent(out);
  save_dataset(ds, out);
  std::printf("gen-data paradigm=%s episodes=%d frames=%d out=%s config=%s elapsed_ms=%lld\n",
              to_string(paradigm), episodes, frames, out.c_str(),
              hash_hex(cfg.digest()).c_str(), static_cast<long long>(elapsed_ms(start)));
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& loss_flag,
              const std::string& dataset_flag, const std::string& out_flag,
              const std::string& metrics_flag) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  if (!loss_flag.empty()) {
    cfg.training.loss_variant = to_string(loss_variant_from_string(loss_flag));
    cfg.validate();
  }
  const Paradigm paradigm = cfg.paradigm();
  const LossVariant variant = cfg.loss_variant();

  const std::string dataset_path =
      dataset_flag.empty() ? default_dataset_path(cfg, paradigm) : dataset_flag;
  const Dataset ds = load_dataset(dataset_path);
  check_hash(ds.config_hash, cfg, opts.allow_hash_mismatch, "dataset");

  const TrainResult result = train(cfg, ds);

  const ModelDims dims = dims_from(cfg);
  const std::string kind =
      make_kind(paradigm, variant, similarity_from_string(cfg.training.similarity));
  const std::string out =
      out_flag.empty() ? str_cat(cfg.out_dir, "/model_", to_string(variant), ".cdrw") : out_flag;
  const std::string metrics_path =
      metrics_flag.empty() ? str_cat(cfg.out_dir, "/metrics_", to_string(variant), ".log")
                           : metrics_flag;

  ensure_parent(out);
  save_checkpoint(out, result.params, {arch_string(dims, kind), cfg.digest()});
  write_text_artifact(metrics_path, cfg, result.metrics_text);

  std::printf(
      "train loss=%s paradigm=%s similarity=%s best_epoch=%d best_val_loss=%.6f epochs_run=%zu "
      "out=%s metrics=%s elapsed_ms=%lld\n",
      to_string(variant), to_string(paradigm), cfg.training.similarity.c_str(),
      result.best_epoch, result.best_val_loss, result.history.size(), out.c_str(),
      metrics_path.c_str(), static_cast<long long>(elapsed_ms(start)));
  if (result.diverged) throw std::runtime_error("training diverged (best checkpoint was saved)");
  return 0;
}

int cmd_eval_retrieval(const CommonOpts& opts, const std::string& checkpoint_flag,
                       const std::string& split, int pool_flag, int queries_flag) {
  ExperimentConfig cfg = load_config(opts);
  CDR_REQUIRE(split == "in" || split == "ood", "--split must be in or ood, got ", split);
  const std::string checkpoint =
      checkpoint_flag.empty() ? str_cat(cfg.out_dir, "/model_cdr.cdrw") : checkpoint_flag;
  LoadedModel model = load_model(checkpoint, cfg, opts.allow_hash_mismatch);

  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  if (split == "ood" && ood_fams.empty())
    throw std::runtime_error("no held-out texture families (renderer.holdout_families is 0)");
  const FamilyPool& query_fams = split == "ood" ? ood_fams : train_fams;

  const int pool_size = pool_flag > 0 ? pool_flag : cfg.evaluation.pool_size;
  const int query_count = queries_flag > 0 ? queries_flag : cfg.evaluation.query_count;
  const int res = cfg.renderer.resolution;
  const SceneSet pool = make_scene_set(cfg.scene, train_fams, pool_size, res,
                                       derive_seed(cfg.evaluation.seed, "pool"), "pool");
  const SceneSet queries =
      make_scene_set(cfg.scene, query_fams, query_count, res,
                     derive_seed(cfg.evaluation.seed, str_cat("query/", split)), "query");

  const SimilarityKind metric = similarity_from_string(cfg.evaluation.retrieval_similarity);
  const Tensor* w = metric == SimilarityKind::Bilinear && model.store.contains(kBilinearParamName)
                        ? &model.store.value(kBilinearParamName)
                        : nullptr;
  const ModelDims dims = dims_from(cfg);
  const RetrievalReport report =
      retrieval_eval(model.store, dims, queries, pool, metric, split,
                     derive_seed(cfg.evaluation.seed, "baseline"), w);

  const std::string line = to_line(report);
  write_text_artifact(str_cat(cfg.out_dir, "/retrieval_", split, ".txt"), cfg, line + "\n");
  std::printf("%s config=%s\n", line.c_str(), hash_hex(cfg.digest()).c_str());
  return 0;
}

int cmd_eval_invariance(const CommonOpts& opts, const std::string& checkpoint_flag,
                        int pairs_flag) {
  ExperimentConfig cfg = load_config(opts);
  const std::string checkpoint =
      checkpoint_flag.empty() ? str_cat(cfg.out_dir, "/model_cdr.cdrw") : checkpoint_flag;
  LoadedModel model = load_model(checkpoint, cfg, opts.allow_hash_mismatch);

  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  const int count = pairs_flag > 0 ? pairs_flag : cfg.evaluation.invariance_pairs;
  const std::vector<InvariancePair> pairs = make_invariance_pairs(
      cfg.scene, train_fams, count, derive_seed(cfg.evaluation.seed, "invariance"));

  std::string warning;
  const InvarianceReport report =
      invariance_eval(model.store, dims_from(cfg), pairs, cfg.renderer.resolution, &warning);
  if (!warning.empty()) std::fprintf(stderr, "warning: %s\n", warning.c_str());

  const std::string line = to_line(report);
  write_text_artifact(str_cat(cfg.out_dir, "/invariance.txt"), cfg, line + "\n");
  std::printf("%s config=%s\n", line.c_str(), hash_hex(cfg.digest()).c_str());
  return 0;
}

int cmd_prop1(const CommonOpts& opts, const std::string& regime_flag, int trials_flag) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  const Prop1Regime regime = prop1_regime_from_string(regime_flag);
  Prop1Config pc = cfg.evaluation.prop1;
  if (trials_flag > 0) pc.trials = trials_flag;

  const Prop1Report report = prop1_experiment(regime, pc, derive_seed(cfg.seed, "prop1"));
  const std::string text = to_text(report);
  write_text_artifact(str_cat(cfg.out_dir, "/prop1_", to_string(regime), ".txt"), cfg, text);
  std::fputs(text.c_str(), stdout);
  std::printf("prop1 done regime=%s elapsed_ms=%lld\n", to_string(regime),
              static_cast<long long>(elapsed_ms(start)));
  return 0;
}

int cmd_plan(const CommonOpts& opts, const std::string& checkpoint_flag, int episodes_flag,
             const std::string& goal_domain, bool dump_frames) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load_config(opts);
  CDR_REQUIRE(goal_domain == "same" || goal_domain == "different",
              "--goal-domain must be same or different, got ", goal_domain);
  if (episodes_flag > 0) cfg.planning.episodes = episodes_flag;

  const std::string checkpoint =
      checkpoint_flag.empty() ? str_cat(cfg.out_dir, "/model_cdr.cdrw") : checkpoint_flag;
  LoadedModel model = load_model(checkpoint, cfg, opts.allow_hash_mismatch);
  CDR_REQUIRE(model.info.paradigm == Paradigm::Controlled,
              "planning needs a controlled-paradigm checkpoint");

  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);
  const PlanningReport report =
      planning_eval(model.store, dims_from(cfg), cfg, train_fams, goal_domain == "different",
                    derive_seed(cfg.seed, "planning"));

  std::string body = to_line(report) + "\n";
  for (size_t e = 0; e < report.details.size(); ++e) {
    const PlanningEpisode& ep = report.details[e];
    body += str_cat("plan episode=", e, " initial=", ep.initial_distance,
                    " final=", ep.final_distance, " steps=", ep.steps_taken,
                    " reached=", ep.reached ? 1 : 0, "\n");
  }
  write_text_artifact(str_cat(cfg.out_dir, "/plan_", goal_domain, ".txt"), cfg, body);

  if (dump_frames) {
    const int res = cfg.renderer.resolution;
    for (size_t e = 0; e < report.details.size(); ++e) {
      const PlanningEpisode& ep = report.details[e];
      const std::string dir = str_cat(cfg.out_dir, "/plan_frames/", goal_domain, "/ep", e);
      fs::create_directories(dir);
      write_ppm(str_cat(dir, "/goal.ppm"), render(ep.goal_state, ep.run_domain, res));
      for (size_t s = 0; s < ep.trajectory.size(); ++s)
        write_ppm(str_cat(dir, "/step", s, ".ppm"),
                  render(ep.trajectory[s], ep.run_domain, res));
    }
  }

  std::fputs(body.c_str(), stdout);
  std::printf("plan done goal=%s elapsed_ms=%lld\n", goal_domain.c_str(),
              static_cast<long long>(elapsed_ms(start)));
  return 0;
}

int cmd_render_preview(const CommonOpts& opts, uint64_t seed_flag, const std::string& out_flag) {
  ExperimentConfig cfg = load_config(opts);
  const uint64_t seed = seed_flag != 0 ? seed_flag : cfg.seed;
  const auto [train_fams, ood_fams] =
      split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed);

  Rng state_rng(derive_seed(seed, "preview/state"));
  Rng domain_rng(derive_seed(seed, "preview/domain"));
  const WorldState state = sample_initial_state(state_rng, cfg.scene);
  const DomainParams dom_a = sample_domain(domain_rng, train_fams, cfg.scene.body_count);
  const DomainParams dom_b = sample_domain(domain_rng, train_fams, cfg.scene.body_count);

  const std::string prefix = out_flag.empty() ? str_cat(cfg.out_dir, "/preview") : out_flag;
  ensure_parent(prefix + "_a.ppm");
  const int res = cfg.renderer.resolution;
  write_ppm(prefix + "_a.ppm", render(state, dom_a, res));
  write_ppm(prefix + "_b.ppm", render(state, dom_b, res));
  write_ppm(prefix + "_mask.ppm", render_mask(state, res));
  std::printf("render-preview seed=%llu out=%s_{a,b,mask}.ppm\n",
              static_cast<unsigned long long>(seed), prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"contrastive domain randomization laboratory"};
  app.require_subcommand(1);

  CommonOpts opts;

  auto* gen = app.add_subcommand("gen-data", "generate and save a training dataset");
  add_common(gen, opts);
  std::string gen_paradigm, gen_out;
  int gen_episodes = 0;
  gen->add_option("--paradigm", gen_paradigm, "controlled|uncontrolled (default: config)");
  gen->add_option("--episodes", gen_episodes, "episode count (default: config)");
  gen->add_option("--out", gen_out, "dataset output path");

  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  add_common(train_cmd, opts);
  std::string train_loss, train_dataset, train_out, train_metrics;
  train_cmd->add_option("--loss", train_loss, "cdr|naive|same-domain (default: config)");
  train_cmd->add_option("--dataset", train_dataset, "dataset path");
  train_cmd->add_option("--out", train_out, "checkpoint output path");
  train_cmd->add_option("--metrics", train_metrics, "metrics log path");

  auto* retr = app.add_subcommand("eval-retrieval", "nearest-neighbour retrieval evaluation");
  add_common(retr, opts);
  std::string retr_checkpoint, retr_split = "ood";
  int retr_pool = 0, retr_queries = 0;
  retr->add_option("--checkpoint", retr_checkpoint, "checkpoint path");
  retr->add_option("--split", retr_split, "in|ood query domains (default ood)");
  retr->add_option("--pool", retr_pool, "pool size (default: config)");
  retr->add_option("--queries", retr_queries, "query count (default: config)");

  auto* inv = app.add_subcommand("eval-invariance", "latent domain-invariance evaluation");
  add_common(inv, opts);
  std::string inv_checkpoint;
  int inv_pairs = 0;
  inv->add_option("--checkpoint", inv_checkpoint, "checkpoint path");
  inv->add_option("--pairs", inv_pairs, "triple count (default: config)");

  auto* prop = app.add_subcommand("prop1", "separable-encoder identifiability experiment");
  add_common(prop, opts);
  std::string prop_regime = "indep";
  int prop_trials = 0;
  prop->add_option("--regime", prop_regime, "indep|dep (default indep)");
  prop->add_option("--trials", prop_trials, "trial count (default: config)");

  auto* plan = app.add_subcommand("plan", "1-step latent MPC planning evaluation");
  add_common(plan, opts);
  std::string plan_checkpoint, plan_goal = "same";
  int plan_episodes = 0;
  bool plan_dump = false;
  plan->add_option("--checkpoint", plan_checkpoint, "checkpoint path");
  plan->add_option("--episodes", plan_episodes, "episode count (default: config)");
  plan->add_option("--goal-domain", plan_goal, "same|different (default same)");
  plan->add_flag("--dump-frames", plan_dump, "write PPM trajectory frames");

  auto* prev = app.add_subcommand("render-preview", "write sample renders as PPM");
  add_common(prev, opts);
  uint64_t prev_seed = 0;
  std::string prev_out;
  prev->add_option("--seed", prev_seed, "scene seed (default: config seed)");
  prev->add_option("--out", prev_out, "output prefix");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(opts, gen_paradigm, gen_episodes, gen_out);
    if (train_cmd->parsed())
      return cmd_train(opts, train_loss, train_dataset, train_out, train_metrics);
    if (retr->parsed())
      return cmd_eval_retrieval(opts, retr_checkpoint, retr_split, retr_pool, retr_queries);
    if (inv->parsed()) return cmd_eval_invariance(opts, inv_checkpoint, inv_pairs);
    if (prop->parsed()) return cmd_prop1(opts, prop_regime, prop_trials);
    if (plan->parsed()) return cmd_plan(opts, plan_checkpoint, plan_episodes, plan_goal, plan_dump);
    if (prev->parsed()) return cmd_render_preview(opts, prev_seed, prev_out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::fprintf(stderr, "error: no subcommand\n");
  return 1;
}
