#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdr/config.hpp"
#include "cdr/datagen.hpp"
#include "cdr/renderer.hpp"
#include "cdr/rng.hpp"

using namespace cdr;

namespace {

ExperimentConfig fast_config() {
  ExperimentConfig cfg = ExperimentConfig::defaults();
  cfg.renderer.resolution = 16;
  cfg.model.resolution = 16;
  return cfg;
}

BatchConfig small_batch(int n) {
  BatchConfig bc;
  bc.batch = n;
  bc.resolution = 16;
  return bc;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

bool same_domain_params(const DomainParams& a, const DomainParams& b) {
  return domain_fingerprint(a) == domain_fingerprint(b);
}

}  // namespace

TEST_SUITE("datagen") {
  TEST_CASE("controlled episodes carry one action per transition") {
    SceneConfig scene;
    const FamilyPool pool{TextureFamily::Solid, TextureFamily::Checker};
    const PairedEpisode ep = gen_controlled_episode(42, 15, scene, pool);
    CHECK(ep.states.size() == 15);
    CHECK(ep.actions.size() == 14);
    CHECK(ep.seed == 42);
    CHECK(ep.domain_a.body_textures.size() == ep.states[0].bodies.size());
    CHECK_FALSE(same_domain_params(ep.domain_a, ep.domain_b));
    CHECK(validate_replay(ep));

    const PairedEpisode again = gen_controlled_episode(42, 15, scene, pool);
    CHECK(again.states[7].bodies[0].position.x == ep.states[7].bodies[0].position.x);
    CHECK(same_domain_params(again.domain_a, ep.domain_a));
    CHECK(same_domain_params(again.domain_b, ep.domain_b));
  }

  TEST_CASE("uncontrolled episodes start with an impulse and drift") {
    SceneConfig scene;
    const FamilyPool pool{TextureFamily::Solid};
    const PairedEpisode ep = gen_uncontrolled_episode(7, 30, scene, pool);
    CHECK(ep.states.size() == 30);
    CHECK(ep.actions.empty());
    CHECK(validate_replay(ep));

    // Exactly one body was kicked at t = 0.
    int moving = 0;
    for (const Body& b : ep.states[0].bodies) {
      if (b.velocity.norm() > 0.0) ++moving;
    }
    CHECK(moving == 1);
  }

  TEST_CASE("replay validation notices tampering") {
    SceneConfig scene;
    const FamilyPool pool{TextureFamily::Solid};
    PairedEpisode ep = gen_controlled_episode(3, 6, scene, pool);
    REQUIRE(validate_replay(ep));

    PairedEpisode bad_state = ep;
    bad_state.states[3].bodies[0].position.x += 1e-12;
    CHECK_FALSE(validate_replay(bad_state));

    PairedEpisode bad_action = ep;
    bad_action.actions[2].force.x += 1e-9;
    CHECK_FALSE(validate_replay(bad_action));

    PairedEpisode stub;
    CHECK_FALSE(validate_replay(stub));
  }

  TEST_CASE("zero action range leaves the scene at rest") {
    SceneConfig scene;
    scene.action_min = scene.action_max = 0.0;
    const FamilyPool pool{TextureFamily::Solid};
    const PairedEpisode ep = gen_controlled_episode(11, 8, scene, pool);
    for (const WorldState& s : ep.states) {
      for (size_t b = 0; b < s.bodies.size(); ++b) {
        CHECK(s.bodies[b].position.x == ep.states[0].bodies[b].position.x);
        CHECK(s.bodies[b].position.y == ep.states[0].bodies[b].position.y);
        CHECK(s.bodies[b].velocity.x == 0.0);
      }
    }
  }

  TEST_CASE("domain fingerprints are collision-free across a thousand episodes") {
    SceneConfig scene;
    const FamilyPool pool{TextureFamily::Solid, TextureFamily::Dots, TextureFamily::Rings};
    std::vector<uint64_t> prints;
    prints.reserve(2000);
    for (uint64_t seed = 0; seed < 1000; ++seed) {
      const PairedEpisode ep = gen_controlled_episode(seed, 2, scene, pool);
      prints.push_back(domain_fingerprint(ep.domain_a));
      prints.push_back(domain_fingerprint(ep.domain_b));
    }
    std::sort(prints.begin(), prints.end());
    CHECK(std::adjacent_find(prints.begin(), prints.end()) == prints.end());
  }

  TEST_CASE("generate_dataset is deterministic with disjoint splits and kinds") {
    const ExperimentConfig cfg = fast_config();
    const Dataset train = generate_dataset(cfg, EpisodeKind::Controlled, "train", 4, 5);
    CHECK(train.split == "train");
    CHECK(train.kind == EpisodeKind::Controlled);
    CHECK(train.frames == 5);
    CHECK(train.body_count == cfg.scene.body_count);
    CHECK(train.config_hash == cfg.digest());
    CHECK(train.families ==
          split_families(cfg.renderer.holdout_families, cfg.renderer.family_split_seed).first);

    const Dataset again = generate_dataset(cfg, EpisodeKind::Controlled, "train", 4, 5);
    for (int e = 0; e < 4; ++e) {
      CHECK(again.episodes[e].seed == train.episodes[e].seed);
      CHECK(again.episodes[e].states[4].bodies[1].position.x ==
            train.episodes[e].states[4].bodies[1].position.x);
      CHECK(same_domain_params(again.episodes[e].domain_b, train.episodes[e].domain_b));
    }

    std::set<uint64_t> seeds;
    for (const PairedEpisode& ep : train.episodes) seeds.insert(ep.seed);
    const Dataset val = generate_dataset(cfg, EpisodeKind::Controlled, "val", 4, 5);
    const Dataset uncon = generate_dataset(cfg, EpisodeKind::Uncontrolled, "train", 4, 5);
    for (const PairedEpisode& ep : val.episodes) seeds.insert(ep.seed);
    for (const PairedEpisode& ep : uncon.episodes) seeds.insert(ep.seed);
    CHECK(seeds.size() == 12);
  }

  TEST_CASE("controlled batch rows can be reproduced by hand at frames=2") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 5, 2);
    const BatchConfig bc = small_batch(5);
    CHECK(available_transitions(ds, Paradigm::Controlled, bc) == 5);

    Rng rng(101);
    const Batch batch = build_cdr_batch(ds, rng, bc, Paradigm::Controlled);
    REQUIRE(batch.batch == 5);
    REQUIRE(batch.pred_images.shape == std::vector<int>{5, 3, 16, 16});
    REQUIRE(batch.label_images.shape == std::vector<int>{5, 3, 16, 16});
    REQUIRE(batch.actions.shape == std::vector<int>{5, 2});
    CHECK(batch.horizon == 1);

    // frames=2 forces t0=0, and a 5-row batch over 5 episodes is a permutation.
    std::set<int> seen(batch.episode_indices.begin(), batch.episode_indices.end());
    CHECK(seen.size() == 5);

    const size_t frame_len = 3u * 16u * 16u;
    for (int i = 0; i < 5; ++i) {
      const PairedEpisode& ep = ds.episodes[batch.episode_indices[i]];
      CHECK(batch.pred_fingerprints[i] == domain_fingerprint(ep.domain_a));
      CHECK(batch.label_fingerprints[i] == domain_fingerprint(ep.domain_b));
      CHECK(batch.actions.at(i, 0) == ep.actions[0].force.x);
      CHECK(batch.actions.at(i, 1) == ep.actions[0].force.y);

      const Tensor want_pred = observations_to_tensor({render(ep.states[0], ep.domain_a, 16)});
      const Tensor want_label = observations_to_tensor({render(ep.states[1], ep.domain_b, 16)});
      for (size_t p = 0; p < frame_len; ++p) {
        REQUIRE(batch.pred_images.data[i * frame_len + p] == want_pred.data[p]);
        REQUIRE(batch.label_images.data[i * frame_len + p] == want_label.data[p]);
      }
    }
  }

  TEST_CASE("naive batches relabel under the prediction domain") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 4, 2);
    Rng rng(55);
    const Batch batch = build_naive_batch(ds, rng, small_batch(4), Paradigm::Controlled);
    for (int i = 0; i < 4; ++i) {
      const PairedEpisode& ep = ds.episodes[batch.episode_indices[i]];
      CHECK(batch.pred_fingerprints[i] == domain_fingerprint(ep.domain_a));
      CHECK(batch.label_fingerprints[i] == domain_fingerprint(ep.domain_a));
      const Tensor want = observations_to_tensor({render(ep.states[1], ep.domain_a, 16)});
      const size_t frame_len = want.data.size();
      for (size_t p = 0; p < frame_len; ++p) {
        REQUIRE(batch.label_images.data[i * frame_len + p] == want.data[p]);
      }
    }
  }

  TEST_CASE("cdr and naive modes consume the generator identically") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 6, 4);
    Rng r1(7);
    Rng r2(7);
    const Batch cdr = build_cdr_batch(ds, r1, small_batch(6), Paradigm::Controlled);
    const Batch naive = build_naive_batch(ds, r2, small_batch(6), Paradigm::Controlled);
    CHECK(cdr.episode_indices == naive.episode_indices);
    CHECK(cdr.pred_images.data == naive.pred_images.data);
    CHECK(cdr.actions.data == naive.actions.data);
    // Both generators end in the same stream position.
    CHECK(r1.bits() == r2.bits());
  }

  TEST_CASE("cdr equals naive bitwise when the intervention draws match") {
    const ExperimentConfig cfg = fast_config();
    Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 6, 4);
    for (PairedEpisode& ep : ds.episodes) ep.domain_b = ep.domain_a;
    Rng r1(9);
    Rng r2(9);
    const Batch cdr = build_cdr_batch(ds, r1, small_batch(6), Paradigm::Controlled);
    const Batch naive = build_naive_batch(ds, r2, small_batch(6), Paradigm::Controlled);
    CHECK(cdr.pred_images.data == naive.pred_images.data);
    CHECK(cdr.label_images.data == naive.label_images.data);
    CHECK(cdr.label_fingerprints == naive.label_fingerprints);
  }

  TEST_CASE("same-domain batches share one fresh appearance") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 5, 3);
    std::set<uint64_t> episode_prints;
    for (const PairedEpisode& ep : ds.episodes) {
      episode_prints.insert(domain_fingerprint(ep.domain_a));
      episode_prints.insert(domain_fingerprint(ep.domain_b));
    }

    Rng rng(77);
    const Batch b1 = build_same_domain_batch(ds, rng, small_batch(8), Paradigm::Controlled);
    const uint64_t shared = b1.pred_fingerprints[0];
    for (int i = 0; i < 8; ++i) {
      CHECK(b1.pred_fingerprints[i] == shared);
      CHECK(b1.label_fingerprints[i] == shared);
    }
    CHECK(episode_prints.count(shared) == 0);

    // The next batch draws a different shared domain.
    const Batch b2 = build_same_domain_batch(ds, rng, small_batch(8), Paradigm::Controlled);
    CHECK(b2.pred_fingerprints[0] != shared);
  }

  TEST_CASE("batch construction is reproducible from the generator seed") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 6, 4);
    Rng r1(123);
    Rng r2(123);
    const Batch a = build_cdr_batch(ds, r1, small_batch(10), Paradigm::Controlled);
    const Batch b = build_cdr_batch(ds, r2, small_batch(10), Paradigm::Controlled);
    CHECK(a.pred_images.data == b.pred_images.data);
    CHECK(a.label_images.data == b.label_images.data);
    CHECK(a.actions.data == b.actions.data);
    CHECK(a.episode_indices == b.episode_indices);

    const Batch c = build_cdr_batch(ds, r1, small_batch(10), Paradigm::Controlled);
    CHECK(c.pred_images.data != a.pred_images.data);
  }

  TEST_CASE("episode sampling is balanced block-wise") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 5, 5);
    Rng rng(31);
    // 20 rows over 5 episodes: four full blocks, each a permutation.
    const Batch batch = build_cdr_batch(ds, rng, small_batch(20), Paradigm::Controlled);
    std::map<int, int> counts;
    for (int e : batch.episode_indices) ++counts[e];
    REQUIRE(counts.size() == 5);
    for (const auto& [ep, count] : counts) CHECK(count == 4);

    // A batch no larger than the episode count never repeats an episode.
    const Dataset wide = generate_dataset(cfg, EpisodeKind::Controlled, "train", 10, 5);
    const Batch small = build_cdr_batch(wide, rng, small_batch(8), Paradigm::Controlled);
    std::set<int> seen(small.episode_indices.begin(), small.episode_indices.end());
    CHECK(seen.size() == 8);
  }

  TEST_CASE("batch size limits are enforced") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 3, 3);
    Rng rng(1);
    CHECK(available_transitions(ds, Paradigm::Controlled, small_batch(1)) == 6);
    CHECK_THROWS_WITH_AS(build_cdr_batch(ds, rng, small_batch(7), Paradigm::Controlled),
                         doctest::Contains("exceeds available transitions"),
                         std::invalid_argument);
    const Batch one = build_cdr_batch(ds, rng, small_batch(1), Paradigm::Controlled);
    CHECK(one.batch == 1);
    CHECK_THROWS(build_cdr_batch(ds, rng, small_batch(0), Paradigm::Controlled));
    CHECK_THROWS(build_cdr_batch(ds, rng, small_batch(4), Paradigm::Uncontrolled));
  }

  TEST_CASE("uncontrolled batches stack context and horizon time-major") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Uncontrolled, "train", 4, 2);
    BatchConfig bc = small_batch(4);
    bc.context_len = 1;
    bc.horizon = 1;
    CHECK(available_transitions(ds, Paradigm::Uncontrolled, bc) == 4);

    Rng rng(13);
    const Batch batch = build_cdr_batch(ds, rng, bc, Paradigm::Uncontrolled);
    REQUIRE(batch.pred_images.shape == std::vector<int>{4, 3, 16, 16});
    REQUIRE(batch.label_images.shape == std::vector<int>{4, 3, 16, 16});
    CHECK(batch.actions.size() == 0);
    CHECK(batch.context_len == 1);
    CHECK(batch.horizon == 1);

    const size_t frame_len = 3u * 16u * 16u;
    for (int i = 0; i < 4; ++i) {
      const PairedEpisode& ep = ds.episodes[batch.episode_indices[i]];
      const Tensor want_ctx = observations_to_tensor({render(ep.states[0], ep.domain_a, 16)});
      const Tensor want_lab = observations_to_tensor({render(ep.states[1], ep.domain_b, 16)});
      for (size_t p = 0; p < frame_len; ++p) {
        REQUIRE(batch.pred_images.data[i * frame_len + p] == want_ctx.data[p]);
        REQUIRE(batch.label_images.data[i * frame_len + p] == want_lab.data[p]);
      }
    }
  }

  TEST_CASE("uncontrolled shapes scale with context and horizon") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Uncontrolled, "train", 3, 12);
    BatchConfig bc = small_batch(6);
    bc.context_len = 3;
    bc.horizon = 4;
    CHECK(available_transitions(ds, Paradigm::Uncontrolled, bc) == 3 * (12 - 3 - 4 + 1));
    Rng rng(3);
    const Batch batch = build_cdr_batch(ds, rng, bc, Paradigm::Uncontrolled);
    CHECK(batch.pred_images.shape == std::vector<int>{18, 3, 16, 16});
    CHECK(batch.label_images.shape == std::vector<int>{24, 3, 16, 16});
  }

  TEST_CASE("within-episode negative reuse tracks the configured fraction") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Uncontrolled, "train", 16, 12);
    BatchConfig bc = small_batch(64);
    bc.context_len = 2;
    bc.horizon = 2;
    Rng rng(99);
    int reused = 0, rows = 0;
    for (int b = 0; b < 30; ++b) {
      const Batch batch = build_cdr_batch(ds, rng, bc, Paradigm::Uncontrolled);
      for (int i = 1; i < batch.batch; ++i) {
        reused += batch.episode_indices[i] == batch.episode_indices[i - 1] ? 1 : 0;
        ++rows;
      }
    }
    const double frac = static_cast<double>(reused) / rows;
    CHECK(frac > 0.44);
    CHECK(frac < 0.56);
  }

  TEST_CASE("dataset round-trips through its binary file bitwise") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 3, 4);
    const std::string path = temp_path("cdr_test_roundtrip.cdrd");
    save_dataset(ds, path);
    const Dataset back = load_dataset(path);
    std::filesystem::remove(path);

    CHECK(back.split == ds.split);
    CHECK(back.kind == ds.kind);
    CHECK(back.frames == ds.frames);
    CHECK(back.body_count == ds.body_count);
    CHECK(back.families == ds.families);
    CHECK(back.config_hash == ds.config_hash);
    REQUIRE(back.episodes.size() == ds.episodes.size());

    for (size_t e = 0; e < ds.episodes.size(); ++e) {
      const PairedEpisode& a = ds.episodes[e];
      const PairedEpisode& b = back.episodes[e];
      CHECK(a.seed == b.seed);
      REQUIRE(a.states.size() == b.states.size());
      REQUIRE(a.actions.size() == b.actions.size());
      for (size_t t = 0; t < a.states.size(); ++t) {
        for (size_t bod = 0; bod < a.states[t].bodies.size(); ++bod) {
          CHECK(a.states[t].bodies[bod].position.x == b.states[t].bodies[bod].position.x);
          CHECK(a.states[t].bodies[bod].velocity.y == b.states[t].bodies[bod].velocity.y);
          CHECK(a.states[t].bodies[bod].size == b.states[t].bodies[bod].size);
          CHECK(a.states[t].bodies[bod].mass == b.states[t].bodies[bod].mass);
          CHECK(a.states[t].bodies[bod].shape == b.states[t].bodies[bod].shape);
        }
      }
      for (size_t t = 0; t < a.actions.size(); ++t) {
        CHECK(a.actions[t].force.x == b.actions[t].force.x);
        CHECK(a.actions[t].force.y == b.actions[t].force.y);
      }
      CHECK(same_domain_params(a.domain_a, b.domain_a));
      CHECK(same_domain_params(a.domain_b, b.domain_b));
      CHECK(validate_replay(b));

      // Loaded episodes re-render to the very same pixels.
      const Observation before = render(a.states[1], a.domain_a, 16);
      const Observation after = render(b.states[1], b.domain_a, 16);
      CHECK(before.pixels == after.pixels);
    }
  }

  TEST_CASE("corrupt dataset files are rejected") {
    const ExperimentConfig cfg = fast_config();
    const Dataset ds = generate_dataset(cfg, EpisodeKind::Controlled, "train", 2, 3);
    const std::string path = temp_path("cdr_test_corrupt.cdrd");
    save_dataset(ds, path);

    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    in.close();

    std::vector<char> bad_magic = bytes;
    bad_magic[0] = 'X';
    {
      std::ofstream out(path, std::ios::binary);
      out.write(bad_magic.data(), static_cast<std::streamsize>(bad_magic.size()));
    }
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("bad dataset magic"),
                         std::runtime_error);

    {
      std::ofstream out(path, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("truncated"),
                         std::runtime_error);

    std::filesystem::remove(path);
    CHECK_THROWS(load_dataset(path));
  }

  TEST_CASE("observations_to_tensor lays frames out channel-major") {
    Observation obs;
    obs.height = obs.width = 2;
    obs.pixels = {// (y,x,c) row-major triples
                  0.0, 0.1, 0.2, 0.3, 0.4, 0.5,
                  0.6, 0.7, 0.8, 0.9, 1.0, 0.05};
    const Tensor t = observations_to_tensor({obs});
    REQUIRE(t.shape == std::vector<int>{1, 3, 2, 2});
    // channel 0: pixels (0,0),(0,1),(1,0),(1,1)
    CHECK(t.data[0] == 0.0);
    CHECK(t.data[1] == 0.3);
    CHECK(t.data[2] == 0.6);
    CHECK(t.data[3] == 0.9);
    // channel 1
    CHECK(t.data[4] == 0.1);
    CHECK(t.data[7] == 1.0);
    CHECK_THROWS(observations_to_tensor({}));
  }
}
