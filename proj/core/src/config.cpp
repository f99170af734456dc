#include "cdr/config.hpp"

#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

#include "cdr/contrastive.hpp"
#include "cdr/util.hpp"

namespace cdr {
namespace {

using nlohmann::json;

json scene_json(const SceneConfig& s) {
  return json{{"body_count", s.body_count},
              {"frame_half_extent", s.frame_half_extent},
              {"drag_coeff", s.drag_coeff},
              {"restitution", s.restitution},
              {"size_min", s.size_min},
              {"size_max", s.size_max},
              {"mass_min", s.mass_min},
              {"mass_max", s.mass_max},
              {"distinct_agent", s.distinct_agent},
              {"agent_size_min", s.agent_size_min},
              {"agent_size_max", s.agent_size_max},
              {"agent_mass_min", s.agent_mass_min},
              {"agent_mass_max", s.agent_mass_max},
              {"impulse_min", s.impulse_min},
              {"impulse_max", s.impulse_max},
              {"action_min", s.action_min},
              {"action_max", s.action_max}};
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["scene"] = scene_json(c.scene);
  j["renderer"] = {{"resolution", c.renderer.resolution},
                   {"holdout_families", c.renderer.holdout_families},
                   {"family_split_seed", c.renderer.family_split_seed}};
  j["model"] = {{"latent_dim", c.model.latent_dim},
                {"conv1_channels", c.model.conv1_channels},
                {"conv2_channels", c.model.conv2_channels},
                {"fc_hidden", c.model.fc_hidden},
                {"action_hidden", c.model.action_hidden},
                {"action_code_dim", c.model.action_code_dim},
                {"trunk_hidden", c.model.trunk_hidden},
                {"gru_hidden", c.model.gru_hidden},
                {"horizon", c.model.horizon},
                {"context_len", c.model.context_len}};
  j["training"] = {{"paradigm", c.training.paradigm},
                   {"loss_variant", c.training.loss_variant},
                   {"similarity", c.training.similarity},
                   {"batch_size", c.training.batch_size},
                   {"epochs", c.training.epochs},
                   {"learning_rate", c.training.learning_rate},
                   {"patience", c.training.patience},
                   {"seed", c.training.seed},
                   {"negative_within_fraction", c.training.negative_within_fraction},
                   {"episodes", c.training.episodes},
                   {"frames_controlled", c.training.frames_controlled},
                   {"frames_uncontrolled", c.training.frames_uncontrolled},
                   {"val_fraction", c.training.val_fraction}};
  j["evaluation"] = {{"pool_size", c.evaluation.pool_size},
                     {"query_count", c.evaluation.query_count},
                     {"invariance_pairs", c.evaluation.invariance_pairs},
                     {"retrieval_similarity", c.evaluation.retrieval_similarity},
                     {"seed", c.evaluation.seed},
                     {"prop1",
                      {{"loss", c.evaluation.prop1.loss},
                       {"trials", c.evaluation.prop1.trials},
                       {"steps", c.evaluation.prop1.steps},
                       {"batch_size", c.evaluation.prop1.batch_size},
                       {"learning_rate", c.evaluation.prop1.learning_rate},
                       {"eval_samples", c.evaluation.prop1.eval_samples}}}};
  j["planning"] = {{"candidates", c.planning.candidates},
                   {"max_steps", c.planning.max_steps},
                   {"goal_tolerance", c.planning.goal_tolerance},
                   {"distance", c.planning.distance},
                   {"episodes", c.planning.episodes},
                   {"seed", c.planning.seed},
                   {"scramble_actions", c.planning.scramble_actions}};
  return j;
}

[[noreturn]] void bad_key(const std::string& path) {
  throw std::invalid_argument(str_cat("config: ", path, " has the wrong type"));
}

double get_num(const json& j, const std::string& path) {
  if (!j.is_number()) bad_key(path);
  return j.get<double>();
}

int get_int(const json& j, const std::string& path) {
  if (!j.is_number_integer()) bad_key(path);
  const int64_t v = j.get<int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    throw std::invalid_argument(str_cat("config: ", path, " out of range"));
  return static_cast<int>(v);
}

uint64_t get_u64(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<uint64_t>();
  if (j.is_number_integer() && j.get<int64_t>() >= 0)
    return static_cast<uint64_t>(j.get<int64_t>());
  bad_key(path);
}

bool get_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) bad_key(path);
  return j.get<bool>();
}

std::string get_str(const json& j, const std::string& path) {
  if (!j.is_string()) bad_key(path);
  return j.get<std::string>();
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  c.seed = get_u64(j.at("seed"), "seed");
  c.out_dir = get_str(j.at("out_dir"), "out_dir");

  const json& s = j.at("scene");
  c.scene.body_count = get_int(s.at("body_count"), "scene.body_count");
  c.scene.frame_half_extent = get_num(s.at("frame_half_extent"), "scene.frame_half_extent");
  c.scene.drag_coeff = get_num(s.at("drag_coeff"), "scene.drag_coeff");
  c.scene.restitution = get_num(s.at("restitution"), "scene.restitution");
  c.scene.size_min = get_num(s.at("size_min"), "scene.size_min");
  c.scene.size_max = get_num(s.at("size_max"), "scene.size_max");
  c.scene.mass_min = get_num(s.at("mass_min"), "scene.mass_min");
  c.scene.mass_max = get_num(s.at("mass_max"), "scene.mass_max");
  c.scene.distinct_agent = get_bool(s.at("distinct_agent"), "scene.distinct_agent");
  c.scene.agent_size_min = get_num(s.at("agent_size_min"), "scene.agent_size_min");
  c.scene.agent_size_max = get_num(s.at("agent_size_max"), "scene.agent_size_max");
  c.scene.agent_mass_min = get_num(s.at("agent_mass_min"), "scene.agent_mass_min");
  c.scene.agent_mass_max = get_num(s.at("agent_mass_max"), "scene.agent_mass_max");
  c.scene.impulse_min = get_num(s.at("impulse_min"), "scene.impulse_min");
  c.scene.impulse_max = get_num(s.at("impulse_max"), "scene.impulse_max");
  c.scene.action_min = get_num(s.at("action_min"), "scene.action_min");
  c.scene.action_max = get_num(s.at("action_max"), "scene.action_max");

  const json& r = j.at("renderer");
  c.renderer.resolution = get_int(r.at("resolution"), "renderer.resolution");
  c.renderer.holdout_families = get_int(r.at("holdout_families"), "renderer.holdout_families");
  c.renderer.family_split_seed =
      get_u64(r.at("family_split_seed"), "renderer.family_split_seed");

  const json& m = j.at("model");
  c.model.latent_dim = get_int(m.at("latent_dim"), "model.latent_dim");
  c.model.conv1_channels = get_int(m.at("conv1_channels"), "model.conv1_channels");
  c.model.conv2_channels = get_int(m.at("conv2_channels"), "model.conv2_channels");
  c.model.fc_hidden = get_int(m.at("fc_hidden"), "model.fc_hidden");
  c.model.action_hidden = get_int(m.at("action_hidden"), "model.action_hidden");
  c.model.action_code_dim = get_int(m.at("action_code_dim"), "model.action_code_dim");
  c.model.trunk_hidden = get_int(m.at("trunk_hidden"), "model.trunk_hidden");
  c.model.gru_hidden = get_int(m.at("gru_hidden"), "model.gru_hidden");
  c.model.horizon = get_int(m.at("horizon"), "model.horizon");
  c.model.context_len = get_int(m.at("context_len"), "model.context_len");
  c.model.resolution = c.renderer.resolution;

  const json& t = j.at("training");
  c.training.paradigm = get_str(t.at("paradigm"), "training.paradigm");
  c.training.loss_variant = get_str(t.at("loss_variant"), "training.loss_variant");
  c.training.similarity = get_str(t.at("similarity"), "training.similarity");
  c.training.batch_size = get_int(t.at("batch_size"), "training.batch_size");
  c.training.epochs = get_int(t.at("epochs"), "training.epochs");
  c.training.learning_rate = get_num(t.at("learning_rate"), "training.learning_rate");
  c.training.patience = get_int(t.at("patience"), "training.patience");
  c.training.seed = get_u64(t.at("seed"), "training.seed");
  c.training.negative_within_fraction =
      get_num(t.at("negative_within_fraction"), "training.negative_within_fraction");
  c.training.episodes = get_int(t.at("episodes"), "training.episodes");
  c.training.frames_controlled = get_int(t.at("frames_controlled"), "training.frames_controlled");
  c.training.frames_uncontrolled =
      get_int(t.at("frames_uncontrolled"), "training.frames_uncontrolled");
  c.training.val_fraction = get_num(t.at("val_fraction"), "training.val_fraction");

  const json& e = j.at("evaluation");
  c.evaluation.pool_size = get_int(e.at("pool_size"), "evaluation.pool_size");
  c.evaluation.query_count = get_int(e.at("query_count"), "evaluation.query_count");
  c.evaluation.invariance_pairs = get_int(e.at("invariance_pairs"), "evaluation.invariance_pairs");
  c.evaluation.retrieval_similarity =
      get_str(e.at("retrieval_similarity"), "evaluation.retrieval_similarity");
  c.evaluation.seed = get_u64(e.at("seed"), "evaluation.seed");
  const json& p1 = e.at("prop1");
  c.evaluation.prop1.loss = get_str(p1.at("loss"), "evaluation.prop1.loss");
  c.evaluation.prop1.trials = get_int(p1.at("trials"), "evaluation.prop1.trials");
  c.evaluation.prop1.steps = get_int(p1.at("steps"), "evaluation.prop1.steps");
  c.evaluation.prop1.batch_size = get_int(p1.at("batch_size"), "evaluation.prop1.batch_size");
  c.evaluation.prop1.learning_rate =
      get_num(p1.at("learning_rate"), "evaluation.prop1.learning_rate");
  c.evaluation.prop1.eval_samples = get_int(p1.at("eval_samples"), "evaluation.prop1.eval_samples");

  const json& p = j.at("planning");
  c.planning.candidates = get_int(p.at("candidates"), "planning.candidates");
  c.planning.max_steps = get_int(p.at("max_steps"), "planning.max_steps");
  c.planning.goal_tolerance = get_num(p.at("goal_tolerance"), "planning.goal_tolerance");
  c.planning.distance = get_str(p.at("distance"), "planning.distance");
  c.planning.episodes = get_int(p.at("episodes"), "planning.episodes");
  c.planning.seed = get_u64(p.at("seed"), "planning.seed");
  c.planning.scramble_actions = get_int(p.at("scramble_actions"), "planning.scramble_actions");
  return c;
}

// File keys overlay the defaults; a key the defaults do not have is a typo
// and gets rejected rather than silently ignored.
void merge_checked(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object())
    throw std::invalid_argument(str_cat("config: ", path.empty() ? "root" : path,
                                        " must be an object"));
  for (const auto& [key, value] : patch.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!base.contains(key))
      throw std::invalid_argument(str_cat("config: unknown key ", here));
    if (base[key].is_object()) {
      merge_checked(base[key], value, here);
    } else {
      base[key] = value;
    }
  }
}

void apply_override(json& base, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  CDR_REQUIRE(eq != std::string::npos && eq > 0, "override \"", assignment,
              "\" is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);

  json* node = &base;
  size_t begin = 0;
  while (true) {
    const size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
    CDR_REQUIRE(node->is_object() && node->contains(key), "config: unknown key ", path);
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  CDR_REQUIRE(!node->is_object(), "config: ", path, " is a section, not a settable key");

  if (json::accept(text)) {
    *node = json::parse(text);
  } else {
    *node = text;  // bare strings like cdr or same_domain
  }
}

}  // namespace

Paradigm paradigm_from_string(const std::string& name) {
  if (name == "controlled") return Paradigm::Controlled;
  if (name == "uncontrolled") return Paradigm::Uncontrolled;
  throw std::invalid_argument(
      str_cat("unknown paradigm \"", name, "\" (want controlled|uncontrolled)"));
}

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "cdr") return LossVariant::Cdr;
  if (name == "naive") return LossVariant::Naive;
  if (name == "same_domain" || name == "same-domain") return LossVariant::SameDomain;
  throw std::invalid_argument(
      str_cat("unknown loss variant \"", name, "\" (want cdr|naive|same-domain)"));
}

const char* to_string(Paradigm p) {
  return p == Paradigm::Controlled ? "controlled" : "uncontrolled";
}

const char* to_string(LossVariant v) {
  switch (v) {
    case LossVariant::Cdr: return "cdr";
    case LossVariant::Naive: return "naive";
    case LossVariant::SameDomain: return "same_domain";
  }
  return "unknown";
}

ExperimentConfig ExperimentConfig::defaults() { return ExperimentConfig{}; }

ExperimentConfig ExperimentConfig::from_file(const std::string& path,
                                             const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(str_cat("cannot open config ", path));
  json file;
  try {
    file = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(str_cat("config ", path, ": ", e.what()));
  }

  json merged = to_json(ExperimentConfig{});
  merge_checked(merged, file, "");
  for (const std::string& o : overrides) apply_override(merged, o);

  ExperimentConfig c = from_json(merged);
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::from_overrides(const std::vector<std::string>& overrides) {
  json merged = to_json(ExperimentConfig{});
  for (const std::string& o : overrides) apply_override(merged, o);
  ExperimentConfig c = from_json(merged);
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  scene.validate();

  CDR_REQUIRE(renderer.resolution == 16 || renderer.resolution == 32 ||
                  renderer.resolution == 64,
              "renderer.resolution must be one of {16, 32, 64}, got ", renderer.resolution);
  CDR_REQUIRE(renderer.holdout_families >= 0 && renderer.holdout_families < kTextureFamilyCount,
              "renderer.holdout_families must be in [0, ", kTextureFamilyCount - 1, "]");

  ModelDims dims = model;
  dims.resolution = renderer.resolution;
  dims.validate();

  const Paradigm par = paradigm();
  const LossVariant variant = loss_variant();
  similarity_from_string(training.similarity);
  CDR_REQUIRE(!(par == Paradigm::Uncontrolled && variant == LossVariant::SameDomain),
              "training: same_domain is not available for the uncontrolled paradigm");
  CDR_REQUIRE(training.batch_size >= 1, "training.batch_size must be >= 1");
  CDR_REQUIRE(training.epochs >= 0, "training.epochs must be >= 0");
  CDR_REQUIRE(training.learning_rate > 0, "training.learning_rate must be positive");
  CDR_REQUIRE(training.patience >= 1, "training.patience must be >= 1");
  CDR_REQUIRE(training.negative_within_fraction >= 0.0 &&
                  training.negative_within_fraction <= 1.0,
              "training.negative_within_fraction must be in [0,1]");
  CDR_REQUIRE(training.episodes >= 10, "training.episodes must be >= 10");
  CDR_REQUIRE(training.frames_controlled >= 2 && training.frames_uncontrolled >= 2,
              "training frame counts must be >= 2");
  CDR_REQUIRE(training.val_fraction > 0.0 && training.val_fraction <= 0.5,
              "training.val_fraction must be in (0, 0.5]");
  if (par == Paradigm::Uncontrolled) {
    CDR_REQUIRE(training.frames_uncontrolled >= model.context_len + model.horizon + 1,
                "training.frames_uncontrolled must cover context_len + horizon + 1 = ",
                model.context_len + model.horizon + 1);
  }

  CDR_REQUIRE(evaluation.pool_size >= 1, "evaluation.pool_size must be >= 1");
  CDR_REQUIRE(evaluation.query_count >= 1, "evaluation.query_count must be >= 1");
  CDR_REQUIRE(evaluation.invariance_pairs >= 1, "evaluation.invariance_pairs must be >= 1");
  similarity_from_string(evaluation.retrieval_similarity);
  CDR_REQUIRE(evaluation.prop1.loss == "squared_error" || evaluation.prop1.loss == "infonce",
              "evaluation.prop1.loss must be squared_error or infonce");
  CDR_REQUIRE(evaluation.prop1.trials >= 1 && evaluation.prop1.steps >= 1 &&
                  evaluation.prop1.batch_size >= 2 && evaluation.prop1.learning_rate > 0 &&
                  evaluation.prop1.eval_samples >= 100,
              "evaluation.prop1 settings out of range");

  CDR_REQUIRE(planning.candidates >= 1, "planning.candidates must be >= 1");
  CDR_REQUIRE(planning.max_steps >= 1, "planning.max_steps must be >= 1");
  CDR_REQUIRE(planning.goal_tolerance > 0, "planning.goal_tolerance must be positive");
  similarity_from_string(planning.distance);
  CDR_REQUIRE(planning.episodes >= 1, "planning.episodes must be >= 1");
  CDR_REQUIRE(planning.scramble_actions >= 1, "planning.scramble_actions must be >= 1");
}

std::string ExperimentConfig::canonical_text() const {
  json j = to_json(*this);
  j.erase("out_dir");
  return j.dump();
}

ConfigHash ExperimentConfig::digest() const {
  const std::string text = canonical_text();
  ConfigHash out{};
  for (int part = 0; part < 4; ++part) {
    uint64_t h = 0xcbf29ce484222325ull ^ mix64(static_cast<uint64_t>(part) + 1);
    for (unsigned char byte : text) {
      h ^= byte;
      h *= 0x100000001b3ull;
    }
    for (int b = 0; b < 8; ++b) out[part * 8 + b] = static_cast<uint8_t>(h >> (8 * b));
  }
  return out;
}

}  // namespace cdr
