#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cdr/autodiff.hpp"

namespace cdr {

// The four similarity families. NegL2 and Cosine raw scores are exponentiated
// before entering the InfoNCE ratio so every ScoreMatrix entry is positive;
// DotExp and Bilinear are exponentials by definition.
enum class SimilarityKind : uint8_t { DotExp = 0, Bilinear = 1, NegL2 = 2, Cosine = 3 };

SimilarityKind similarity_from_string(const std::string& name);
const char* to_string(SimilarityKind kind);

inline constexpr const char* kBilinearParamName = "loss.bilinear.w";
// Guards the norms in the Cosine loss path; exactly-zero latents otherwise
// divide by zero.
inline constexpr double kCosineEps = 1e-12;

// ---- Plain (tensor) path: evaluation and hand-checkable identities. ----

// Raw (log-domain) scores: entry (i,j) compares prediction i with label j.
// Bilinear requires `bilinear_w` ([d,d]).
Tensor raw_scores(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                  const Tensor* bilinear_w = nullptr);

// Positive ScoreMatrix: exp(raw score − row max). The shift cancels in
// info_nce, so values equal the unshifted definition while huge scores stay
// finite.
Tensor similarity_matrix(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                         const Tensor* bilinear_w = nullptr);

// mean over rows i of −log(S_ii / Σ_j S_ij); entries must be positive.
double info_nce(const Tensor& scores);

// Raw score between row i of a and row j of b (higher = more similar);
// same orientation as raw_scores. Bilinear needs w.
double pair_score(const Tensor& a, int i, const Tensor& b, int j, SimilarityKind kind,
                  const Tensor* w = nullptr);

// log N − loss: the InfoNCE mutual-information lower bound in nats.
double mi_lower_bound(double loss, int batch);

// The three controlled-paradigm losses share the arithmetic; they differ in
// how their batches were constructed. same_domain additionally enforces its
// contract: every item tagged with one identical domain fingerprint.
double cdr_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                const Tensor* bilinear_w = nullptr);
double naive_dr_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                     const Tensor* bilinear_w = nullptr);
double same_domain_loss(const Tensor& preds, const Tensor& labels, SimilarityKind kind,
                        const std::vector<uint64_t>& item_domains,
                        const Tensor* bilinear_w = nullptr);

// Multi-horizon loss: mean over k of the per-horizon InfoNCE.
double cdr_uncontrolled_loss(const std::vector<Tensor>& preds_per_k,
                             const std::vector<Tensor>& labels_per_k, SimilarityKind kind,
                             const Tensor* bilinear_w = nullptr);

// ---- Graph path: the same math on the tape, for training. ----

// Raw scores as a tape node; creates/uses the shared Bilinear weight.
Value raw_scores(Tape& tape, Value preds, Value labels, SimilarityKind kind);

// InfoNCE over raw scores (row-max stabilization happens inside the op).
Value info_nce_graph(Tape& tape, Value raw_scores);

// Convenience: info_nce_graph(raw_scores(...)).
Value contrastive_loss_graph(Tape& tape, Value preds, Value labels, SimilarityKind kind);

}  // namespace cdr
