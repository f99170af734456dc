#include "cdr/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "cdr/util.hpp"

namespace cdr {
namespace {

void check_pair(const Tensor& preds, const Tensor& labels) {
  CDR_REQUIRE(preds.rank() == 2 && labels.rank() == 2, "similarity: want matrices, got ",
              shape_str(preds.shape), " and ", shape_str(labels.shape));
  CDR_REQUIRE(preds.same_shape(labels), "similarity: preds ", shape_str(preds.shape),
              " vs labels ", shape_str(labels.shape));
  CDR_REQUIRE(preds.dim(0) >= 1, "similarity: empty batch");
}

double inv_norm(const Tensor& m, int row) {
  double sq = 0.0;
  for (int k = 0; k < m.dim(1); ++k) sq += m.at(row, k) * m.at(row, k);
  return 1.0 / std::sqrt(sq + kCosineEps);
}

}  // namespace

SimilarityKind similarity_from_string(const std::string& name) {
  if (name == "dotexp") return SimilarityKind::DotExp;
  if (name == "bilinear") return SimilarityKind::Bilinear;
  if (name == "negl2") return SimilarityKind::NegL2;
  if (name == "cosine") return SimilarityKind::Cosine;
  throw std::invalid_argument(
      str_cat("unknown similarity \"", name, "\" (want dotexp|bilinear|negl2|cosine)"));
}

const char* to_string(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::DotExp: return "dotexp";
    case SimilarityKind::Bilinear: return "bilinear";
    case SimilarityKind::NegL2: return "negl2";
    case SimilarityKind::Cosine: return "cosine";
  }
  return "unknown";
}

Tensor raw_scores(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                  const Tensor* bilinear_w) {
  check_pair(preds, labels);
  const int n = preds.dim(0), d = preds.dim(1);
  Tensor s = Tensor::zeros({n, n});

  switch (kind) {
    case SimilarityKind::DotExp:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) acc += preds.at(i, k) * labels.at(j, k);
          s.at(i, j) = acc;
        }
      break;
    case SimilarityKind::Bilinear: {
      CDR_REQUIRE(bilinear_w != nullptr, "bilinear similarity needs its weight matrix");
      CDR_REQUIRE(bilinear_w->rank() == 2 && bilinear_w->dim(0) == d && bilinear_w->dim(1) == d,
                  "bilinear weight must be [", d, ",", d, "], got ",
                  shape_str(bilinear_w->shape));
      Tensor zw = Tensor::zeros({n, d});
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) acc += preds.at(i, k) * bilinear_w->at(k, j);
          zw.at(i, j) = acc;
        }
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) acc += zw.at(i, k) * labels.at(j, k);
          s.at(i, j) = acc;
        }
      break;
    }
    case SimilarityKind::NegL2:
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) {
            const double diff = preds.at(i, k) - labels.at(j, k);
            acc += diff * diff;
          }
          s.at(i, j) = -acc;
        }
      break;
    case SimilarityKind::Cosine:
      for (int i = 0; i < n; ++i) {
        const double inv_i = inv_norm(preds, i);
        for (int j = 0; j < n; ++j) {
          double acc = 0.0;
          for (int k = 0; k < d; ++k) acc += preds.at(i, k) * labels.at(j, k);
          s.at(i, j) = acc * inv_i * inv_norm(labels, j);
        }
      }
      break;
  }
  return s;
}

Tensor similarity_matrix(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                         const Tensor* bilinear_w) {
  Tensor s = raw_scores(preds, labels, kind, bilinear_w);
  const int n = s.dim(0);
  for (int i = 0; i < n; ++i) {
    double row_max = s.at(i, 0);
    for (int j = 1; j < n; ++j) row_max = std::max(row_max, s.at(i, j));
    for (int j = 0; j < n; ++j) s.at(i, j) = std::exp(s.at(i, j) - row_max);
  }
  return s;
}

double info_nce(const Tensor& scores) {
  CDR_REQUIRE(scores.rank() == 2 && scores.dim(0) == scores.dim(1),
              "info_nce wants a square ScoreMatrix, got ", shape_str(scores.shape));
  const int n = scores.dim(0);
  CDR_REQUIRE(n >= 1, "info_nce: empty ScoreMatrix");
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    double denom = 0.0;
    for (int j = 0; j < n; ++j) {
      const double v = scores.at(i, j);
      CDR_REQUIRE(v > 0.0 && std::isfinite(v), "info_nce: ScoreMatrix entry (", i, ",", j,
                  ") = ", v, " is not a positive finite value");
      denom += v;
    }
    total += -std::log(scores.at(i, i) / denom);
  }
  return total / n;
}

double mi_lower_bound(double loss, int batch) {
  CDR_REQUIRE(batch >= 1, "mi_lower_bound: batch must be >= 1, got ", batch);
  return std::log(static_cast<double>(batch)) - loss;
}

double pair_score(const Tensor& a, int i, const Tensor& b, int j, SimilarityKind kind,
                  const Tensor* w) {
  CDR_REQUIRE(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(1),
              "pair_score: want matrices with matching width, got ", shape_str(a.shape),
              " and ", shape_str(b.shape));
  const int d = a.dim(1);
  switch (kind) {
    case SimilarityKind::DotExp: {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) acc += a.at(i, k) * b.at(j, k);
      return acc;
    }
    case SimilarityKind::Bilinear: {
      CDR_REQUIRE(w != nullptr && w->rank() == 2 && w->dim(0) == d && w->dim(1) == d,
                  "pair_score: bilinear needs a [", d, ",", d, "] weight");
      double acc = 0.0;
      for (int r = 0; r < d; ++r) {
        double wb = 0.0;
        for (int c = 0; c < d; ++c) wb += w->at(r, c) * b.at(j, c);
        acc += a.at(i, r) * wb;
      }
      return acc;
    }
    case SimilarityKind::NegL2: {
      double acc = 0.0;
      for (int k = 0; k < d; ++k) {
        const double diff = a.at(i, k) - b.at(j, k);
        acc += diff * diff;
      }
      return -acc;
    }
    case SimilarityKind::Cosine: {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (int k = 0; k < d; ++k) {
        dot += a.at(i, k) * b.at(j, k);
        na += a.at(i, k) * a.at(i, k);
        nb += b.at(j, k) * b.at(j, k);
      }
      return dot / std::sqrt((na + kCosineEps) * (nb + kCosineEps));
    }
  }
  return 0.0;
}

double cdr_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                const Tensor* bilinear_w) {
  return info_nce(similarity_matrix(preds, labels, kind, bilinear_w));
}

double naive_dr_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                     const Tensor* bilinear_w) {
  return info_nce(similarity_matrix(preds, labels, kind, bilinear_w));
}

double same_domain_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                        const std::vector<uint64_t>& item_domains, const Tensor* bilinear_w) {
  CDR_REQUIRE(static_cast<int>(item_domains.size()) == preds.dim(0),
              "same_domain_loss: ", item_domains.size(), " domain tags for ", preds.dim(0),
              " items");
  for (size_t i = 1; i < item_domains.size(); ++i) {
    CDR_REQUIRE(item_domains[i] == item_domains[0],
                "same_domain_loss: batch mixes domains (item ", i,
                " differs from item 0); same-domain batches must share one e");
  }
  return info_nce(similarity_matrix(preds, labels, kind, bilinear_w));
}

double cdr_uncontrolled_loss(const std::vector<Tensor>& preds_per_k,
                             const std::vector<Tensor>& labels_per_k, SimilarityKind kind,
                             const Tensor* bilinear_w) {
  CDR_REQUIRE(!preds_per_k.empty(), "cdr_uncontrolled_loss: no horizons");
  CDR_REQUIRE(preds_per_k.size() == labels_per_k.size(), "cdr_uncontrolled_loss: ",
              preds_per_k.size(), " prediction horizons vs ", labels_per_k.size(), " labels");
  double total = 0.0;
  for (size_t k = 0; k < preds_per_k.size(); ++k) {
    total += info_nce(similarity_matrix(preds_per_k[k], labels_per_k[k], kind, bilinear_w));
  }
  return total / static_cast<double>(preds_per_k.size());
}

Value raw_scores(Tape& t, Value preds, Value labels, SimilarityKind kind) {
  check_pair(t.value(preds), t.value(labels));
  // Copy the dims out: pushing nodes below may reallocate the tape's storage,
  // so references returned by t.value() must not outlive the next push.
  const int n = t.value(preds).dim(0);
  const int d = t.value(preds).dim(1);

  switch (kind) {
    case SimilarityKind::DotExp:
      return t.matmul(preds, labels, /*transpose_b=*/true);
    case SimilarityKind::Bilinear: {
      Value w = t.param(kBilinearParamName, {d, d}, Init::GlorotUniform);
      return t.matmul(t.matmul(preds, w), labels, /*transpose_b=*/true);
    }
    case SimilarityKind::NegL2: {
      Value gram = t.matmul(preds, labels, /*transpose_b=*/true);
      Value rz = t.rowwise_sqnorm(preds);
      Value ry = t.rowwise_sqnorm(labels);
      Value s = t.add_col(t.scale(gram, 2.0), t.scale(rz, -1.0));
      return t.add_row(s, t.reshape(t.scale(ry, -1.0), {1, n}));
    }
    case SimilarityKind::Cosine: {
      Value gram = t.matmul(preds, labels, /*transpose_b=*/true);
      Value inv_z = t.reciprocal(t.sqrt(t.add_scalar(t.rowwise_sqnorm(preds), kCosineEps)));
      Value inv_y = t.reciprocal(t.sqrt(t.add_scalar(t.rowwise_sqnorm(labels), kCosineEps)));
      return t.mul_row(t.mul_col(gram, inv_z), t.reshape(inv_y, {1, n}));
    }
  }
  throw std::invalid_argument("raw_scores: bad similarity kind");
}

Value info_nce_graph(Tape& t, Value scores) { return t.info_nce_rows(scores); }

Value contrastive_loss_graph(Tape& t, Value preds, Value labels, SimilarityKind kind) {
  return t.info_nce_rows(raw_scores(t, preds, labels, kind));
}

}  // namespace cdr
