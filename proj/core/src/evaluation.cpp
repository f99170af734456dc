#include "cdr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "cdr/datagen.hpp"
#include "cdr/util.hpp"

namespace cdr {
namespace {

struct Stats {
  double mean = 0.0, stddev = 0.0;
};

Stats aggregate(const std::vector<double>& xs) {
  Stats s;
  if (xs.empty()) return s;
  double sum = 0.0, sq = 0.0;
  for (double x : xs) {
    sum += x;
    sq += x * x;
  }
  s.mean = sum / xs.size();
  s.stddev = std::sqrt(std::max(0.0, sq / xs.size() - s.mean * s.mean));
  return s;
}

double dot_row(const Tensor& a, int i, const Tensor& b, int j) {
  double acc = 0.0;
  for (int k = 0; k < a.dim(1); ++k) acc += a.at(i, k) * b.at(j, k);
  return acc;
}

double row_norm_sq(const Tensor& a, int i) { return dot_row(a, i, a, i); }

}  // namespace

double iou(const Mask& a, const Mask& b) {
  CDR_REQUIRE(a.height == b.height && a.width == b.width, "iou: mask sizes differ (",
              a.height, "x", a.width, " vs ", b.height, "x", b.width, ")");
  int64_t inter = 0, uni = 0;
  const size_t n = a.bits.size();
  for (size_t i = 0; i < n; ++i) {
    const bool pa = a.bits[i] != 0, pb = b.bits[i] != 0;
    inter += pa && pb;
    uni += pa || pb;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double object_distance(const WorldState& a, const WorldState& b) {
  CDR_REQUIRE(a.bodies.size() == b.bodies.size(), "object_distance: body counts differ (",
              a.bodies.size(), " vs ", b.bodies.size(), ")");
  double sum = 0.0;
  for (size_t i = 0; i < a.bodies.size(); ++i)
    sum += (a.bodies[i].position - b.bodies[i].position).norm();
  return sum;
}

SceneSet make_scene_set(const SceneConfig& scene, const FamilyPool& families, int count,
                        int resolution, uint64_t seed, const std::string& tag) {
  CDR_REQUIRE(count >= 1, "scene set needs at least one scene");
  SceneSet set;
  set.resolution = resolution;
  set.states.reserve(count);
  std::vector<Observation> images(count);
  for (int i = 0; i < count; ++i) {
    Rng state_rng(derive_seed(seed, str_cat(tag, "/state/", i)));
    Rng domain_rng(derive_seed(seed, str_cat(tag, "/domain/", i)));
    WorldState state = sample_initial_state(state_rng, scene);
    const DomainParams domain = sample_domain(domain_rng, families, scene.body_count);
    images[i] = render(state, domain, resolution);
    set.states.push_back(std::move(state));
  }
  set.images = observations_to_tensor(images);
  return set;
}

RetrievalReport retrieval_eval(ParamStore& encoder, const ModelDims& dims,
                               const SceneSet& queries, const SceneSet& pool,
                               SimilarityKind metric, const std::string& split_tag,
                               uint64_t baseline_seed, const Tensor* bilinear_w) {
  CDR_REQUIRE(!pool.states.empty(), "retrieval pool is empty");
  CDR_REQUIRE(!queries.states.empty(), "retrieval query set is empty");
  CDR_REQUIRE(queries.resolution == pool.resolution, "query/pool resolutions differ");
  if (metric == SimilarityKind::Bilinear)
    CDR_REQUIRE(bilinear_w != nullptr, "bilinear retrieval needs the loss weight matrix");

  const Tensor pool_z = encode_images(encoder, dims, pool.images);
  const Tensor query_z = encode_images(encoder, dims, queries.images);
  const int q_count = static_cast<int>(queries.states.size());
  const int p_count = static_cast<int>(pool.states.size());

  std::vector<double> ious(q_count), dists(q_count);
  std::vector<double> base_ious(q_count), base_dists(q_count);
  Rng baseline_rng(baseline_seed);

  for (int i = 0; i < q_count; ++i) {
    int best = 0;
    double best_score = pair_score(query_z, i, pool_z, 0, metric, bilinear_w);
    for (int j = 1; j < p_count; ++j) {
      const double s = pair_score(query_z, i, pool_z, j, metric, bilinear_w);
      if (s > best_score) {
        best_score = s;
        best = j;
      }
    }
    const Mask qm = render_mask(queries.states[i], queries.resolution);
    ious[i] = iou(qm, render_mask(pool.states[best], pool.resolution));
    dists[i] = object_distance(queries.states[i], pool.states[best]);

    const int r = baseline_rng.uniform_int(p_count);
    base_ious[i] = iou(qm, render_mask(pool.states[r], pool.resolution));
    base_dists[i] = object_distance(queries.states[i], pool.states[r]);
  }

  RetrievalReport report;
  report.split = split_tag;
  report.queries = q_count;
  report.pool = p_count;
  const Stats si = aggregate(ious), sd = aggregate(dists);
  report.mean_iou = si.mean;
  report.std_iou = si.stddev;
  report.mean_distance = sd.mean;
  report.std_distance = sd.stddev;
  report.baseline_iou = aggregate(base_ious).mean;
  report.baseline_distance = aggregate(base_dists).mean;
  return report;
}

std::vector<InvariancePair> make_invariance_pairs(const SceneConfig& scene,
                                                  const FamilyPool& families, int count,
                                                  uint64_t seed) {
  CDR_REQUIRE(count >= 1, "need at least one invariance pair");
  std::vector<InvariancePair> pairs;
  pairs.reserve(count);
  for (int i = 0; i < count; ++i) {
    InvariancePair p;
    Rng state_rng(derive_seed(seed, str_cat("inv/state/", i)));
    Rng domain_rng(derive_seed(seed, str_cat("inv/domain/", i)));
    p.state = sample_initial_state(state_rng, scene);
    p.domain_a = sample_domain(domain_rng, families, scene.body_count);
    p.domain_b = sample_domain(domain_rng, families, scene.body_count);
    while (domain_fingerprint(p.domain_b) == domain_fingerprint(p.domain_a))
      p.domain_b = sample_domain(domain_rng, families, scene.body_count);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

InvarianceReport invariance_eval(ParamStore& encoder, const ModelDims& dims,
                                 const std::vector<InvariancePair>& pairs, int resolution,
                                 std::string* warning) {
  CDR_REQUIRE(pairs.size() >= 200, "invariance_eval needs at least 200 pairs, got ",
              pairs.size());
  const int n = static_cast<int>(pairs.size());
  std::vector<Observation> images(static_cast<size_t>(n) * 2);
  for (int i = 0; i < n; ++i) {
    images[i] = render(pairs[i].state, pairs[i].domain_a, resolution);
    images[n + i] = render(pairs[i].state, pairs[i].domain_b, resolution);
  }
  const Tensor z = encode_images(encoder, dims, observations_to_tensor(images));

  std::vector<double> cosines, mses;
  cosines.reserve(n);
  mses.reserve(n);
  int excluded = 0;
  for (int i = 0; i < n; ++i) {
    const double na = row_norm_sq(z, i), nb = row_norm_sq(z, n + i);
    if (na == 0.0 || nb == 0.0) {
      ++excluded;
      continue;
    }
    cosines.push_back(dot_row(z, i, z, n + i) / std::sqrt(na * nb));
    double mse = 0.0;
    for (int k = 0; k < z.dim(1); ++k) {
      const double diff = z.at(i, k) - z.at(n + i, k);
      mse += diff * diff;
    }
    mses.push_back(mse / z.dim(1));
  }
  CDR_REQUIRE(!cosines.empty(), "every invariance pair had an all-zero latent");
  if (excluded > 0 && warning != nullptr)
    *warning = str_cat("excluded ", excluded, " pair(s) with all-zero latents");

  InvarianceReport report;
  report.pairs = static_cast<int>(cosines.size());
  report.excluded = excluded;
  const Stats sc = aggregate(cosines), sm = aggregate(mses);
  report.mean_cosine = sc.mean;
  report.std_cosine = sc.stddev;
  report.mean_mse = sm.mean;
  report.std_mse = sm.stddev;
  return report;
}

std::string to_line(const RetrievalReport& r) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "retrieval split=%s queries=%d pool=%d iou=%.17g iou_std=%.17g dist=%.17g "
                "dist_std=%.17g baseline_iou=%.17g baseline_dist=%.17g",
                r.split.c_str(), r.queries, r.pool, r.mean_iou, r.std_iou, r.mean_distance,
                r.std_distance, r.baseline_iou, r.baseline_distance);
  return buf;
}

std::string to_line(const InvarianceReport& r) {
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "invariance pairs=%d excluded=%d cosine=%.17g cosine_std=%.17g mse=%.17g "
                "mse_std=%.17g",
                r.pairs, r.excluded, r.mean_cosine, r.std_cosine, r.mean_mse, r.std_mse);
  return buf;
}

}  // namespace cdr
