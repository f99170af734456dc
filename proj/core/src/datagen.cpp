#include "cdr/datagen.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "cdr/util.hpp"

namespace cdr {
namespace {

constexpr char kMagic[4] = {'C', 'D', 'R', 'D'};
constexpr uint16_t kVersion = 1;

bool same_bits(double a, double b) {
  return std::bit_cast<uint64_t>(a) == std::bit_cast<uint64_t>(b);
}

bool same_bits(Vec2 a, Vec2 b) { return same_bits(a.x, b.x) && same_bits(a.y, b.y); }

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  put_bytes(out, buf, sizeof(T));
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<uint64_t>(v)); }

void get_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error(str_cat("truncated dataset ", path));
}

template <class T>
T get_le(std::istream& in, const std::string& path) {
  uint8_t buf[sizeof(T)];
  get_bytes(in, buf, sizeof(T), path);
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(get_le<uint64_t>(in, path));
}

void put_texture(std::ostream& out, const TextureSpec& t) {
  put_le(out, static_cast<uint8_t>(t.family));
  for (double p : t.params) put_f64(out, p);
  for (const Rgb& c : t.palette) {
    put_f64(out, c.r);
    put_f64(out, c.g);
    put_f64(out, c.b);
  }
}

TextureSpec get_texture(std::istream& in, const std::string& path) {
  TextureSpec t;
  const uint8_t family = get_le<uint8_t>(in, path);
  if (family >= kTextureFamilyCount)
    throw std::runtime_error(str_cat("dataset ", path, ": bad texture family ", family));
  t.family = static_cast<TextureFamily>(family);
  for (double& p : t.params) p = get_f64(in, path);
  for (Rgb& c : t.palette) {
    c.r = get_f64(in, path);
    c.g = get_f64(in, path);
    c.b = get_f64(in, path);
  }
  return t;
}

void put_domain(std::ostream& out, const DomainParams& d) {
  put_texture(out, d.background);
  for (const TextureSpec& t : d.body_textures) put_texture(out, t);
  put_f64(out, d.light);
  put_f64(out, d.pixel_noise_std);
  put_le(out, d.noise_seed);
}

DomainParams get_domain(std::istream& in, int body_count, const std::string& path) {
  DomainParams d;
  d.background = get_texture(in, path);
  d.body_textures.resize(body_count);
  for (TextureSpec& t : d.body_textures) t = get_texture(in, path);
  d.light = get_f64(in, path);
  d.pixel_noise_std = get_f64(in, path);
  d.noise_seed = get_le<uint64_t>(in, path);
  return d;
}

PairedEpisode gen_episode(uint64_t seed, int frames, SceneConfig scene, const FamilyPool& pool,
                          EpisodeKind kind) {
  CDR_REQUIRE(frames >= 2, "episode needs at least 2 frames, got ", frames);
  scene.distinct_agent = scene.distinct_agent && kind == EpisodeKind::Controlled;

  PairedEpisode ep;
  ep.seed = seed;

  Rng state_rng(derive_seed(seed, "state"));
  WorldState state = sample_initial_state(state_rng, scene);

  ep.states.reserve(frames);
  if (kind == EpisodeKind::Uncontrolled) {
    Rng impulse_rng(derive_seed(seed, "impulse"));
    const int target = impulse_rng.uniform_int(static_cast<int>(state.bodies.size()));
    const ActionPush push = sample_initial_impulse(impulse_rng, scene);
    Body& hit = state.bodies[target];
    hit.velocity += push.force * (kFrameDt / hit.mass);
    ep.states.push_back(state);
    for (int t = 1; t < frames; ++t) ep.states.push_back(step(ep.states.back(), {}, kFrameDt));
  } else {
    Rng action_rng(derive_seed(seed, "actions"));
    ep.states.push_back(state);
    ep.actions.reserve(frames - 1);
    for (int t = 1; t < frames; ++t) {
      ep.actions.push_back(sample_action(action_rng, scene));
      ep.states.push_back(step(ep.states.back(), ep.actions.back(), kFrameDt));
    }
  }

  const int body_count = static_cast<int>(state.bodies.size());
  Rng dom_a(derive_seed(seed, "domain_a"));
  Rng dom_b(derive_seed(seed, "domain_b"));
  ep.domain_a = sample_domain(dom_a, pool, body_count);
  ep.domain_b = sample_domain(dom_b, pool, body_count);
  return ep;
}

enum class DomainMode { Cdr, Naive, Shared };

Batch build_batch(const Dataset& ds, Rng& rng, const BatchConfig& bc, Paradigm paradigm,
                  DomainMode mode) {
  const int n = bc.batch;
  CDR_REQUIRE(n >= 1, "batch size must be >= 1, got ", n);
  CDR_REQUIRE(bc.resolution >= 1, "batch resolution must be positive");
  if (paradigm == Paradigm::Controlled) {
    CDR_REQUIRE(ds.kind == EpisodeKind::Controlled,
                "controlled batches need a controlled dataset, got ", to_string(ds.kind));
  } else {
    CDR_REQUIRE(ds.kind == EpisodeKind::Uncontrolled,
                "uncontrolled batches need an uncontrolled dataset, got ", to_string(ds.kind));
    CDR_REQUIRE(bc.context_len >= 1 && bc.horizon >= 1,
                "context_len and horizon must be >= 1");
  }
  const int64_t avail = available_transitions(ds, paradigm, bc);
  CDR_REQUIRE(avail >= 1, "dataset episodes too short for this batch configuration");
  CDR_REQUIRE(n <= avail, "batch size ", n, " exceeds available transitions ", avail);

  const int episode_count = static_cast<int>(ds.episodes.size());
  const int starts = paradigm == Paradigm::Controlled
                         ? ds.frames - 1
                         : ds.frames - bc.context_len - bc.horizon + 1;

  Batch out;
  out.paradigm = paradigm;
  out.batch = n;
  out.context_len = paradigm == Paradigm::Controlled ? 0 : bc.context_len;
  out.horizon = paradigm == Paradigm::Controlled ? 1 : bc.horizon;
  out.pred_fingerprints.resize(n);
  out.label_fingerprints.resize(n);
  out.episode_indices.resize(n);

  // Distinct episodes within each block of episode_count rows; uniform marginal.
  std::vector<int> order(episode_count);
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> eps(n), t0(n);
  int filled = 0;
  while (filled < n) {
    const int take = std::min(episode_count, n - filled);
    for (int i = 0; i < take; ++i) {
      const int j = i + rng.uniform_int(episode_count - i);
      std::swap(order[i], order[j]);
      eps[filled + i] = order[i];
    }
    filled += take;
  }
  for (int i = 0; i < n; ++i) {
    t0[i] = rng.uniform_int(starts);
    if (paradigm == Paradigm::Uncontrolled && i > 0 && rng.uniform() < bc.within_fraction &&
        starts >= 2) {
      // Negative drawn from the same sequence at a different start.
      eps[i] = eps[i - 1];
      int alt = rng.uniform_int(starts - 1);
      if (alt >= t0[i - 1]) ++alt;
      t0[i] = alt;
    }
  }

  DomainParams shared;
  if (mode == DomainMode::Shared) shared = sample_domain(rng, ds.families, ds.body_count);

  const int res = bc.resolution;
  if (paradigm == Paradigm::Controlled) {
    std::vector<Observation> preds(n), labels(n);
    out.actions = Tensor({n, 2});
    for (int i = 0; i < n; ++i) {
      const PairedEpisode& ep = ds.episodes[eps[i]];
      const DomainParams& pred_dom = mode == DomainMode::Shared ? shared : ep.domain_a;
      const DomainParams& label_dom = mode == DomainMode::Shared
                                          ? shared
                                          : (mode == DomainMode::Cdr ? ep.domain_b : ep.domain_a);
      const int t = t0[i];
      preds[i] = render(ep.states[t], pred_dom, res);
      labels[i] = render(ep.states[t + 1], label_dom, res);
      out.actions.at(i, 0) = ep.actions[t].force.x;
      out.actions.at(i, 1) = ep.actions[t].force.y;
      out.episode_indices[i] = eps[i];
      out.pred_fingerprints[i] = domain_fingerprint(pred_dom);
      out.label_fingerprints[i] = domain_fingerprint(label_dom);
    }
    out.pred_images = observations_to_tensor(preds);
    out.label_images = observations_to_tensor(labels);
  } else {
    const int c_len = bc.context_len, k_len = bc.horizon;
    std::vector<Observation> ctx(static_cast<size_t>(c_len) * n);
    std::vector<Observation> labels(static_cast<size_t>(k_len) * n);
    for (int i = 0; i < n; ++i) {
      const PairedEpisode& ep = ds.episodes[eps[i]];
      const DomainParams& pred_dom = mode == DomainMode::Shared ? shared : ep.domain_a;
      const DomainParams& label_dom = mode == DomainMode::Shared
                                          ? shared
                                          : (mode == DomainMode::Cdr ? ep.domain_b : ep.domain_a);
      const int t = t0[i];
      for (int c = 0; c < c_len; ++c)
        ctx[static_cast<size_t>(c) * n + i] = render(ep.states[t + c], pred_dom, res);
      for (int k = 1; k <= k_len; ++k)
        labels[static_cast<size_t>(k - 1) * n + i] =
            render(ep.states[t + c_len - 1 + k], label_dom, res);
      out.episode_indices[i] = eps[i];
      out.pred_fingerprints[i] = domain_fingerprint(pred_dom);
      out.label_fingerprints[i] = domain_fingerprint(label_dom);
    }
    out.pred_images = observations_to_tensor(ctx);
    out.label_images = observations_to_tensor(labels);
  }
  return out;
}

}  // namespace

const char* to_string(EpisodeKind kind) {
  return kind == EpisodeKind::Controlled ? "controlled" : "uncontrolled";
}

PairedEpisode gen_uncontrolled_episode(uint64_t seed, int frames, const SceneConfig& scene,
                                       const FamilyPool& pool) {
  return gen_episode(seed, frames, scene, pool, EpisodeKind::Uncontrolled);
}

PairedEpisode gen_controlled_episode(uint64_t seed, int frames, const SceneConfig& scene,
                                     const FamilyPool& pool) {
  return gen_episode(seed, frames, scene, pool, EpisodeKind::Controlled);
}

bool validate_replay(const PairedEpisode& episode) {
  const size_t frames = episode.states.size();
  if (frames < 2) return false;
  const bool controlled = !episode.actions.empty();
  if (controlled && episode.actions.size() != frames - 1) return false;

  WorldState state = episode.states[0];
  for (size_t t = 1; t < frames; ++t) {
    std::optional<ActionPush> action;
    if (controlled) action = episode.actions[t - 1];
    state = step(state, action, kFrameDt);
    const WorldState& want = episode.states[t];
    if (state.bodies.size() != want.bodies.size()) return false;
    for (size_t b = 0; b < state.bodies.size(); ++b) {
      if (!same_bits(state.bodies[b].position, want.bodies[b].position) ||
          !same_bits(state.bodies[b].velocity, want.bodies[b].velocity))
        return false;
    }
  }
  return true;
}

Dataset generate_dataset(const ExperimentConfig& config, EpisodeKind kind,
                         const std::string& split, int episode_count, int frames) {
  CDR_REQUIRE(episode_count >= 1, "episode_count must be >= 1");
  Dataset ds;
  ds.split = split;
  ds.kind = kind;
  ds.frames = frames;
  ds.body_count = config.scene.body_count;
  ds.config_hash = config.digest();
  ds.families = split_families(config.renderer.holdout_families,
                               config.renderer.family_split_seed)
                    .first;
  ds.episodes.reserve(episode_count);
  for (int i = 0; i < episode_count; ++i) {
    const uint64_t seed =
        derive_seed(config.seed, str_cat("data/", split, "/", to_string(kind), "/", i));
    ds.episodes.push_back(kind == EpisodeKind::Controlled
                              ? gen_controlled_episode(seed, frames, config.scene, ds.families)
                              : gen_uncontrolled_episode(seed, frames, config.scene, ds.families));
  }
  return ds;
}

Batch build_cdr_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                      Paradigm paradigm) {
  return build_batch(dataset, rng, config, paradigm, DomainMode::Cdr);
}

Batch build_naive_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                        Paradigm paradigm) {
  return build_batch(dataset, rng, config, paradigm, DomainMode::Naive);
}

Batch build_same_domain_batch(const Dataset& dataset, Rng& rng, const BatchConfig& config,
                              Paradigm paradigm) {
  return build_batch(dataset, rng, config, paradigm, DomainMode::Shared);
}

int64_t available_transitions(const Dataset& dataset, Paradigm paradigm,
                              const BatchConfig& config) {
  const int64_t episodes = static_cast<int64_t>(dataset.episodes.size());
  const int64_t starts = paradigm == Paradigm::Controlled
                             ? dataset.frames - 1
                             : dataset.frames - config.context_len - config.horizon + 1;
  return episodes * std::max<int64_t>(starts, 0);
}

Tensor observations_to_tensor(const std::vector<Observation>& observations) {
  CDR_REQUIRE(!observations.empty(), "observations_to_tensor needs at least one image");
  const int n = static_cast<int>(observations.size());
  const int h = observations[0].height, w = observations[0].width;
  Tensor out({n, 3, h, w});
  for (int i = 0; i < n; ++i) {
    const Observation& obs = observations[i];
    CDR_REQUIRE(obs.height == h && obs.width == w, "observation ", i, " has mismatched size");
    double* dst = out.data.data() + static_cast<size_t>(i) * 3 * h * w;
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) *dst++ = obs.at(y, x, c);
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& path) {
  CDR_REQUIRE(!dataset.episodes.empty(), "refusing to save an empty dataset");
  CDR_REQUIRE(dataset.frames >= 2 && dataset.frames <= 0xffff, "dataset frames out of range");
  CDR_REQUIRE(dataset.body_count >= 1, "dataset body_count must be >= 1");

  uint8_t split_tag;
  if (dataset.split == "train") split_tag = 0;
  else if (dataset.split == "val") split_tag = 1;
  else if (dataset.split == "test") split_tag = 2;
  else throw std::invalid_argument(str_cat("unknown dataset split tag ", dataset.split));

  const WorldState& first = dataset.episodes[0].states.at(0);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open ", path, " for writing"));
  put_bytes(out, kMagic, sizeof(kMagic));
  put_le(out, kVersion);
  put_bytes(out, dataset.config_hash.data(), dataset.config_hash.size());
  put_le(out, static_cast<uint32_t>(dataset.episodes.size()));
  put_le(out, split_tag);
  put_le(out, static_cast<uint8_t>(dataset.kind));
  put_le(out, static_cast<uint16_t>(dataset.frames));
  put_le(out, static_cast<uint16_t>(dataset.body_count));
  put_le(out, static_cast<uint16_t>(dataset.families.size()));
  for (TextureFamily f : dataset.families) put_le(out, static_cast<uint8_t>(f));
  put_f64(out, first.frame_half_extent);
  put_f64(out, first.drag_coeff);
  put_f64(out, first.restitution);

  const bool controlled = dataset.kind == EpisodeKind::Controlled;
  for (const PairedEpisode& ep : dataset.episodes) {
    CDR_REQUIRE(static_cast<int>(ep.states.size()) == dataset.frames,
                "episode length differs from dataset frames");
    CDR_REQUIRE(ep.actions.size() == (controlled ? ep.states.size() - 1 : 0),
                "episode action count does not match its kind");
    put_le(out, ep.seed);
    put_le(out, static_cast<uint16_t>(ep.states.size()));
    const WorldState& s0 = ep.states[0];
    CDR_REQUIRE(static_cast<int>(s0.bodies.size()) == dataset.body_count,
                "episode body count differs from dataset body_count");
    for (const Body& b : s0.bodies) {
      put_le(out, static_cast<uint8_t>(b.shape));
      put_f64(out, b.size);
      put_f64(out, b.mass);
    }
    for (const WorldState& s : ep.states) {
      CDR_REQUIRE(s.bodies.size() == s0.bodies.size() &&
                      same_bits(s.frame_half_extent, first.frame_half_extent) &&
                      same_bits(s.drag_coeff, first.drag_coeff) &&
                      same_bits(s.restitution, first.restitution),
                  "episode states are not uniform in scene parameters");
      for (const Body& b : s.bodies) {
        put_f64(out, b.position.x);
        put_f64(out, b.position.y);
        put_f64(out, b.velocity.x);
        put_f64(out, b.velocity.y);
      }
    }
    CDR_REQUIRE(static_cast<int>(ep.domain_a.body_textures.size()) == dataset.body_count &&
                    static_cast<int>(ep.domain_b.body_textures.size()) == dataset.body_count,
                "domain body_textures size differs from dataset body_count");
    put_domain(out, ep.domain_a);
    put_domain(out, ep.domain_b);
    for (const ActionPush& a : ep.actions) {
      put_f64(out, a.force.x);
      put_f64(out, a.force.y);
    }
  }
  if (!out) throw std::runtime_error(str_cat("failed writing dataset ", path));
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(str_cat("cannot open dataset ", path));

  char magic[4];
  get_bytes(in, magic, sizeof(magic), path);
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error(str_cat("bad dataset magic in ", path, " (want CDRD)"));
  const uint16_t version = get_le<uint16_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error(str_cat("unsupported dataset version ", version, " in ", path));

  Dataset ds;
  get_bytes(in, ds.config_hash.data(), ds.config_hash.size(), path);
  const uint32_t count = get_le<uint32_t>(in, path);
  if (count == 0 || count > (1u << 24))
    throw std::runtime_error(str_cat("implausible episode count ", count, " in ", path));

  const uint8_t split_tag = get_le<uint8_t>(in, path);
  if (split_tag > 2) throw std::runtime_error(str_cat("bad split tag in ", path));
  ds.split = split_tag == 0 ? "train" : (split_tag == 1 ? "val" : "test");
  const uint8_t kind = get_le<uint8_t>(in, path);
  if (kind > 1) throw std::runtime_error(str_cat("bad episode kind in ", path));
  ds.kind = static_cast<EpisodeKind>(kind);
  ds.frames = get_le<uint16_t>(in, path);
  ds.body_count = get_le<uint16_t>(in, path);
  if (ds.frames < 2 || ds.body_count < 1 || ds.body_count > 1024)
    throw std::runtime_error(str_cat("implausible dataset geometry in ", path));
  const uint16_t family_count = get_le<uint16_t>(in, path);
  if (family_count == 0 || family_count > kTextureFamilyCount)
    throw std::runtime_error(str_cat("bad family pool size in ", path));
  ds.families.resize(family_count);
  for (TextureFamily& f : ds.families) {
    const uint8_t id = get_le<uint8_t>(in, path);
    if (id >= kTextureFamilyCount)
      throw std::runtime_error(str_cat("bad texture family id in ", path));
    f = static_cast<TextureFamily>(id);
  }
  const double half_extent = get_f64(in, path);
  const double drag = get_f64(in, path);
  const double restitution = get_f64(in, path);

  const bool controlled = ds.kind == EpisodeKind::Controlled;
  ds.episodes.resize(count);
  for (PairedEpisode& ep : ds.episodes) {
    ep.seed = get_le<uint64_t>(in, path);
    const uint16_t frames = get_le<uint16_t>(in, path);
    if (frames != ds.frames)
      throw std::runtime_error(str_cat("episode length mismatch in ", path));

    WorldState proto;
    proto.frame_half_extent = half_extent;
    proto.drag_coeff = drag;
    proto.restitution = restitution;
    proto.bodies.resize(ds.body_count);
    for (Body& b : proto.bodies) {
      const uint8_t shape = get_le<uint8_t>(in, path);
      if (shape > 1) throw std::runtime_error(str_cat("bad body shape in ", path));
      b.shape = static_cast<Shape>(shape);
      b.size = get_f64(in, path);
      b.mass = get_f64(in, path);
    }
    ep.states.assign(frames, proto);
    for (WorldState& s : ep.states) {
      for (Body& b : s.bodies) {
        b.position.x = get_f64(in, path);
        b.position.y = get_f64(in, path);
        b.velocity.x = get_f64(in, path);
        b.velocity.y = get_f64(in, path);
      }
    }
    ep.domain_a = get_domain(in, ds.body_count, path);
    ep.domain_b = get_domain(in, ds.body_count, path);
    if (controlled) {
      ep.actions.resize(frames - 1);
      for (ActionPush& a : ep.actions) {
        a.force.x = get_f64(in, path);
        a.force.y = get_f64(in, path);
      }
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw std::runtime_error(str_cat("trailing bytes after last episode in ", path));
  return ds;
}

}  // namespace cdr
