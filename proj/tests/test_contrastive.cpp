#include <doctest.h>

#include <cmath>
#include <vector>

#include "cdr/autodiff.hpp"
#include "cdr/contrastive.hpp"
#include "cdr/rng.hpp"
#include "cdr/tensor.hpp"

using namespace cdr;

namespace {

Tensor random_matrix(Rng& rng, int n, int d, double scale = 1.0) {
  Tensor t({n, d});
  for (double& v : t.data) v = scale * rng.normal();
  return t;
}

constexpr SimilarityKind kAllKinds[] = {SimilarityKind::DotExp, SimilarityKind::Bilinear,
                                        SimilarityKind::NegL2, SimilarityKind::Cosine};

}  // namespace

TEST_SUITE("contrastive") {
  TEST_CASE("similarity names round-trip") {
    for (SimilarityKind kind : kAllKinds) {
      CHECK(similarity_from_string(to_string(kind)) == kind);
    }
    CHECK_THROWS(similarity_from_string("euclidean"));
  }

  TEST_CASE("raw scores match hand-computed values") {
    const Tensor preds({2, 2}, {1.0, 0.0, 0.0, 2.0});
    const Tensor labels({2, 2}, {1.0, 0.0, 1.0, 1.0});

    const Tensor dot = raw_scores(preds, labels, SimilarityKind::DotExp);
    CHECK(dot.at(0, 0) == 1.0);
    CHECK(dot.at(0, 1) == 1.0);
    CHECK(dot.at(1, 0) == 0.0);
    CHECK(dot.at(1, 1) == 2.0);

    const Tensor negl2 = raw_scores(preds, labels, SimilarityKind::NegL2);
    CHECK(negl2.at(0, 0) == 0.0);
    CHECK(negl2.at(0, 1) == -1.0);
    CHECK(negl2.at(1, 0) == doctest::Approx(-5.0).epsilon(1e-15));
    CHECK(negl2.at(1, 1) == doctest::Approx(-2.0).epsilon(1e-15));

    const Tensor cos = raw_scores(preds, labels, SimilarityKind::Cosine);
    CHECK(cos.at(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(cos.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));
    CHECK(cos.at(1, 0) == 0.0);

    Tensor eye({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const Tensor bilin = raw_scores(preds, labels, SimilarityKind::Bilinear, &eye);
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        CHECK(bilin.at(i, j) == doctest::Approx(dot.at(i, j)).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("pair_score agrees with the score matrix for every kind") {
    Rng rng(12);
    const Tensor a = random_matrix(rng, 6, 3);
    const Tensor b = random_matrix(rng, 6, 3);
    Tensor w = random_matrix(rng, 3, 3);
    for (SimilarityKind kind : kAllKinds) {
      const Tensor* wp = kind == SimilarityKind::Bilinear ? &w : nullptr;
      const Tensor raw = raw_scores(a, b, kind, wp);
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          CHECK(pair_score(a, i, b, j, kind, wp) ==
                doctest::Approx(raw.at(i, j)).epsilon(1e-12));
        }
      }
    }
    // Unlike the matrix path, pair_score also takes rows from matrices of
    // different heights.
    const Tensor tall = random_matrix(rng, 9, 3);
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc += a.at(1, k) * tall.at(8, k);
    CHECK(pair_score(a, 1, tall, 8, SimilarityKind::DotExp) ==
          doctest::Approx(acc).epsilon(1e-12));
  }

  TEST_CASE("info_nce of a uniform matrix is log N") {
    for (int n : {2, 5, 64}) {
      const Tensor scores = Tensor::full({n, n}, 0.37);
      CHECK(std::abs(info_nce(scores) - std::log(static_cast<double>(n))) < 1e-10);
    }
  }

  TEST_CASE("info_nce of a single-item batch is zero") {
    CHECK(info_nce(Tensor({1, 1}, {2.5})) == 0.0);
  }

  TEST_CASE("info_nce worked example") {
    const Tensor scores({2, 2}, {2.0, 1.0, 1.0, 2.0});
    CHECK(std::abs(info_nce(scores) + std::log(2.0 / 3.0)) < 1e-10);
  }

  TEST_CASE("info_nce rejects malformed score matrices") {
    CHECK_THROWS(info_nce(Tensor({2, 3}, {1, 1, 1, 1, 1, 1})));
    CHECK_THROWS(info_nce(Tensor({2, 2}, {1.0, 1.0, -0.5, 1.0})));
    CHECK_THROWS(info_nce(Tensor({2, 2}, {1.0, 0.0, 1.0, 1.0})));
  }

  TEST_CASE("mi lower bound is log N minus the loss") {
    CHECK(mi_lower_bound(std::log(64.0), 64) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mi_lower_bound(0.2, 64) == doctest::Approx(std::log(64.0) - 0.2).epsilon(1e-12));
  }

  TEST_CASE("row-max stabilization leaves the loss unchanged") {
    Rng rng(8);
    // A large shared component puts every raw score near 900 while keeping the
    // within-row spread small, so exp(raw) overflows but exp(raw - max) does
    // not underflow.
    Tensor preds = random_matrix(rng, 6, 4);
    Tensor labels = random_matrix(rng, 6, 4);
    for (double& v : preds.data) v += 15.0;
    for (double& v : labels.data) v += 15.0;

    const Tensor raw = raw_scores(preds, labels, SimilarityKind::DotExp);
    CHECK(raw.at(0, 0) > 710.0);
    CHECK(!std::isfinite(std::exp(raw.at(0, 0))));

    const Tensor sim = similarity_matrix(preds, labels, SimilarityKind::DotExp);
    CHECK(sim.all_finite());
    const double loss = info_nce(sim);
    CHECK(std::isfinite(loss));

    // Scaling a row of the positive matrix (adding a constant to that row of
    // raw scores) cancels in the softmax ratio.
    Tensor scaled = sim;
    for (int j = 0; j < 6; ++j) scaled.at(2, j) *= std::exp(3.0);
    CHECK(std::abs(info_nce(scaled) - loss) < 1e-10);
  }

  TEST_CASE("loss arithmetic is shared across paradigms") {
    Rng rng(4);
    const Tensor preds = random_matrix(rng, 8, 5);
    const Tensor labels = random_matrix(rng, 8, 5);
    Tensor w = random_matrix(rng, 5, 5);
    for (SimilarityKind kind : kAllKinds) {
      const Tensor* wp = kind == SimilarityKind::Bilinear ? &w : nullptr;
      const double cdr = cdr_loss(preds, labels, kind, wp);
      CHECK(cdr == naive_dr_loss(preds, labels, kind, wp));
      CHECK(cdr == info_nce(similarity_matrix(preds, labels, kind, wp)));
      const std::vector<uint64_t> same(8, 0x1234u);
      CHECK(cdr == same_domain_loss(preds, labels, kind, same, wp));
    }
  }

  TEST_CASE("same_domain_loss enforces one shared fingerprint") {
    Rng rng(4);
    const Tensor preds = random_matrix(rng, 4, 3);
    const Tensor labels = random_matrix(rng, 4, 3);
    std::vector<uint64_t> mixed{1, 1, 2, 1};
    CHECK_THROWS(same_domain_loss(preds, labels, SimilarityKind::DotExp, mixed));
    std::vector<uint64_t> short_list{1, 1};
    CHECK_THROWS(same_domain_loss(preds, labels, SimilarityKind::DotExp, short_list));
  }

  TEST_CASE("appending a shared coordinate leaves the loss unchanged") {
    Rng rng(19);
    const int n = 6, d = 4;
    const Tensor preds = random_matrix(rng, n, d);
    const Tensor labels = random_matrix(rng, n, d);
    Tensor preds_aug({n, d + 1});
    Tensor labels_aug({n, d + 1});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) {
        preds_aug.at(i, j) = preds.at(i, j);
        labels_aug.at(i, j) = labels.at(i, j);
      }
      preds_aug.at(i, d) = 0.8;
      labels_aug.at(i, d) = 0.8;
    }
    Tensor eye_small = Tensor::zeros({d, d});
    Tensor eye_big = Tensor::zeros({d + 1, d + 1});
    for (int j = 0; j < d; ++j) eye_small.at(j, j) = 1.0;
    for (int j = 0; j < d + 1; ++j) eye_big.at(j, j) = 1.0;

    const struct {
      SimilarityKind kind;
      const Tensor* w_small;
      const Tensor* w_big;
    } cases[] = {
        {SimilarityKind::DotExp, nullptr, nullptr},
        {SimilarityKind::NegL2, nullptr, nullptr},
        {SimilarityKind::Bilinear, &eye_small, &eye_big},
    };
    for (const auto& c : cases) {
      const double base = cdr_loss(preds, labels, c.kind, c.w_small);
      const double aug = cdr_loss(preds_aug, labels_aug, c.kind, c.w_big);
      CHECK(std::abs(aug - base) < 1e-10);
    }
  }

  TEST_CASE("uninformative labels give exactly log N, informative ones less") {
    Rng rng(23);
    const int n = 16;
    const Tensor preds = random_matrix(rng, n, 4);
    Tensor flat({n, 4});
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < 4; ++j) flat.at(i, j) = 0.3 * j;
    }
    const double blind = cdr_loss(preds, flat, SimilarityKind::DotExp);
    CHECK(std::abs(blind - std::log(static_cast<double>(n))) < 1e-12);
    CHECK(std::abs(mi_lower_bound(blind, n)) < 1e-12);

    const double informed = cdr_loss(preds, preds, SimilarityKind::NegL2);
    CHECK(informed < blind);
    CHECK(mi_lower_bound(informed, n) > 0.0);
  }

  TEST_CASE("diagonal alignment strength has a closed-form loss") {
    for (double s : {0.0, 1.0, 2.0}) {
      Tensor m = Tensor::zeros({4, 4});
      for (int i = 0; i < 4; ++i) m.at(i, i) = s;
      const double loss = cdr_loss(m, m, SimilarityKind::DotExp);
      const double expected = std::log(1.0 + 3.0 * std::exp(-s * s));
      CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
    }
    // Stronger alignment, smaller loss.
    Tensor a = Tensor::zeros({4, 4});
    Tensor b = Tensor::zeros({4, 4});
    for (int i = 0; i < 4; ++i) {
      a.at(i, i) = 1.0;
      b.at(i, i) = 2.0;
    }
    CHECK(cdr_loss(b, b, SimilarityKind::DotExp) < cdr_loss(a, a, SimilarityKind::DotExp));
  }

  TEST_CASE("zero latents are safe under cosine") {
    const Tensor z = Tensor::zeros({3, 4});
    const Tensor raw = raw_scores(z, z, SimilarityKind::Cosine);
    for (double v : raw.data) CHECK(v == 0.0);
    const double loss = cdr_loss(z, z, SimilarityKind::Cosine);
    CHECK(std::abs(loss - std::log(3.0)) < 1e-12);
  }

  TEST_CASE("multi-horizon loss averages the per-horizon losses") {
    // Horizon 0: uniform scores, loss log 2. Horizon 1: the worked 2x2 example.
    const Tensor flat = Tensor::zeros({2, 2});
    const double ln2 = std::log(2.0);
    Tensor p1({2, 2}, {ln2, 0.0, 0.0, ln2});
    Tensor l1({2, 2}, {1.0, 0.0, 0.0, 1.0});
    const std::vector<Tensor> preds{flat, p1};
    const std::vector<Tensor> labels{flat, l1};
    const double loss = cdr_uncontrolled_loss(preds, labels, SimilarityKind::DotExp);
    const double expected = 0.5 * (std::log(2.0) + std::log(1.5));
    CHECK(loss == doctest::Approx(expected).epsilon(1e-12));

    // K = 1 reduces to the single-horizon loss.
    const std::vector<Tensor> one_p{p1};
    const std::vector<Tensor> one_l{l1};
    CHECK(cdr_uncontrolled_loss(one_p, one_l, SimilarityKind::DotExp) ==
          cdr_loss(p1, l1, SimilarityKind::DotExp));

    CHECK_THROWS(cdr_uncontrolled_loss({}, {}, SimilarityKind::DotExp));
    CHECK_THROWS(cdr_uncontrolled_loss(one_p, {}, SimilarityKind::DotExp));
  }

  TEST_CASE("graph path matches the plain path for every kind") {
    Rng rng(31);
    const Tensor preds = random_matrix(rng, 8, 6);
    const Tensor labels = random_matrix(rng, 8, 6);
    for (SimilarityKind kind : kAllKinds) {
      ParamStore store(99);
      Tape tape(store);
      const Value loss = contrastive_loss_graph(tape, tape.input(preds), tape.input(labels), kind);
      const Tensor* wp = nullptr;
      if (kind == SimilarityKind::Bilinear) {
        REQUIRE(store.contains(kBilinearParamName));
        wp = &store.value(kBilinearParamName);
      }
      const double plain = cdr_loss(preds, labels, kind, wp);
      CHECK(tape.scalar(loss) == doctest::Approx(plain).epsilon(1e-12));

      tape.backward(loss);
      if (kind == SimilarityKind::Bilinear) {
        REQUIRE(tape.has_grad(kBilinearParamName));
        CHECK(tape.param_grad(kBilinearParamName).all_finite());
      }
    }
  }

  TEST_CASE("graph loss gradient check passes for every kind") {
    Rng rng(101);
    const Tensor preds_seed = random_matrix(rng, 5, 3);
    const Tensor labels_seed = random_matrix(rng, 5, 3);
    for (SimilarityKind kind : kAllKinds) {
      ParamStore store(7);
      // Preds/labels come from learnable leaves so the check exercises the
      // whole loss, not just the bilinear weight.
      store.set("p", preds_seed);
      store.set("l", labels_seed);
      auto build = [&](Tape& tape) {
        const Value p = tape.param("p", {5, 3}, Init::Zero);
        const Value l = tape.param("l", {5, 3}, Init::Zero);
        return contrastive_loss_graph(tape, p, l, kind);
      };
      const GradCheckResult res = grad_check(store, build, 55, 120);
      CHECK(res.max_rel_error < 1e-4);
      CHECK(res.checked > 0);
    }
  }
}
