#pragma once

#include <string>
#include <vector>

#include "cdr/autodiff.hpp"
#include "cdr/config.hpp"
#include "cdr/contrastive.hpp"
#include "cdr/models.hpp"
#include "cdr/renderer.hpp"
#include "cdr/tensor.hpp"
#include "cdr/worldsim.hpp"

namespace cdr {

// |A∩B| / |A∪B| over object pixels; 1 when both masks are empty.
double iou(const Mask& a, const Mask& b);

// Sum over body index of Euclidean center distance, meters.
double object_distance(const WorldState& a, const WorldState& b);

struct RetrievalReport {
  std::string split;  // "in" or "ood"
  int queries = 0;
  int pool = 0;
  double mean_iou = 0.0, std_iou = 0.0;
  double mean_distance = 0.0, std_distance = 0.0;
  // Random-pair baseline over the same pool, for scale.
  double baseline_iou = 0.0;
  double baseline_distance = 0.0;
};

struct InvarianceReport {
  int pairs = 0;
  int excluded = 0;  // all-zero latents have no cosine; counted, not scored
  double mean_cosine = 0.0, std_cosine = 0.0;
  double mean_mse = 0.0, std_mse = 0.0;
};

// A set of independently sampled static scenes, each rendered once under its
// own domain, with ground-truth states kept for scoring.
struct SceneSet {
  std::vector<WorldState> states;
  Tensor images;  // [M,3,H,W]
  int resolution = 0;
};

// Scenes i get seeds derived from (seed, tag, i); domains come from `families`.
SceneSet make_scene_set(const SceneConfig& scene, const FamilyPool& families, int count,
                        int resolution, uint64_t seed, const std::string& tag);

// Nearest neighbour per query over the pool (ties to the lowest pool index),
// scored by mask IOU and object_distance between the underlying states.
RetrievalReport retrieval_eval(ParamStore& encoder, const ModelDims& dims,
                               const SceneSet& queries, const SceneSet& pool,
                               SimilarityKind metric, const std::string& split_tag,
                               uint64_t baseline_seed, const Tensor* bilinear_w = nullptr);

struct InvariancePair {
  WorldState state;
  DomainParams domain_a;
  DomainParams domain_b;
};

// Same state, two different domains per pair (fingerprints forced distinct).
std::vector<InvariancePair> make_invariance_pairs(const SceneConfig& scene,
                                                  const FamilyPool& families, int count,
                                                  uint64_t seed);

// Cosine similarity and MSE between f(o(x,e1)) and f(o(x,e2)); needs at least
// 200 pairs. If warning is non-null it receives a note when pairs were
// excluded.
InvarianceReport invariance_eval(ParamStore& encoder, const ModelDims& dims,
                                 const std::vector<InvariancePair>& pairs, int resolution,
                                 std::string* warning = nullptr);

// One-line machine-parsable renderings used in reports and logs.
std::string to_line(const RetrievalReport& r);
std::string to_line(const InvarianceReport& r);

}  // namespace cdr
