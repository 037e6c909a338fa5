#pragma once

#include <random>
#include <string>
#include <vector>

#include "pipeline.hpp"

namespace iadvtext {

/// Gradient norms below this produce a zero field instead of dividing by a
/// vanishing denominator; a zero field makes the adversarial loss equal the
/// clean loss.
inline constexpr double kVanishingGradNorm = 1e-12;

/// Per-position D-vectors r^(t) added to the embedded input. Masked
/// positions carry zero vectors.
struct PerturbationField {
  int dim = 0;
  std::vector<std::vector<double>> r;  // [T][D]

  double concat_norm() const;
  bool is_zero() const;
};

/// Per-position, per-neighbor direction weights. Entries outside the
/// position's neighbor vocabulary are implicitly zero.
struct AlphaWeights {
  std::vector<std::vector<double>> a;  // [T][k_t]

  double concat_norm() const;
};

/// r^(t) = sum_k a^(t)_k d^(t)_k over the position's direction vectors.
PerturbationField alpha_to_perturbation(const AlphaWeights& alpha,
                                        const SentenceNeighbors& neighbors);

// ---------------------------------------------------------------------------
// Batched generators. All take an embedded batch on an open tape, run the
// forward/backward passes they need, and leave the tape's gradients zeroed.
// The clean forward (and its loss, when labels are involved) is returned so
// the caller can reuse it in the joint objective.
// ---------------------------------------------------------------------------

struct AdvtBatchResult {
  std::vector<PerturbationField> fields;
  ForwardTrace clean_trace;
  TensorPtr clean_loss;  // summed over the batch
};

/// r^(t) = eps * g^(t) / ||g||_2 with g the concatenation over t of
/// d loss / d embedding; the norm is per sentence, not per token.
AdvtBatchResult advt_perturb_batch(Tape& tape, const ModelParams& params,
                                   const EmbeddedBatch& eb, const Batch& batch,
                                   double eps);

struct IadvtBatchResult {
  std::vector<AlphaWeights> alphas;
  std::vector<PerturbationField> fields;
  std::vector<AlphaWeights> raw;  // pre-normalization gradient components
  ForwardTrace clean_trace;       // forward at alpha = 0
  TensorPtr clean_loss;
};

/// alpha^(t) = eps * g^(t) / ||g||_2, g^(t)_k = d loss / d alpha^(t)_k
/// evaluated at alpha = 0, i.e. the embedding gradient dotted with each
/// direction vector.
IadvtBatchResult iadvt_alpha_batch(Tape& tape, const ModelParams& params,
                                   const EmbeddedBatch& eb, const Batch& batch,
                                   const std::vector<SentenceNeighbors>& nbrs,
                                   double eps);

struct VatBatchResult {
  std::vector<PerturbationField> fields;
  ForwardTrace clean_trace;
};

/// One-step approximation: evaluate the KL against the clean distribution at
/// a random field of norm xi, take the gradient at the perturbed point, and
/// renormalize to eps. Labels are never consulted.
VatBatchResult vat_perturb_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 double eps, double xi, std::mt19937_64& rng);

struct IvatBatchResult {
  std::vector<AlphaWeights> alphas;
  std::vector<PerturbationField> fields;
  ForwardTrace clean_trace;
};

/// The alpha-space analogue of VAT: KL gradient w.r.t. alpha at a random
/// alpha of norm xi, renormalized to eps.
IvatBatchResult ivat_alpha_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 const std::vector<SentenceNeighbors>& nbrs,
                                 double eps, double xi, std::mt19937_64& rng);

/// Isotropic Gaussian field normalized to eps; independent of labels and
/// parameters.
std::vector<PerturbationField> random_perturb_batch(const Batch& batch,
                                                    int dim, double eps,
                                                    std::mt19937_64& rng);

/// One uniformly chosen neighbor per position, one-hot alpha scaled so the
/// concatenated alpha norm is eps.
std::vector<PerturbationField> iadvt_rand_batch(
    const Batch& batch, const std::vector<SentenceNeighbors>& nbrs, double eps,
    std::mt19937_64& rng);

struct IadvtBestResult {
  std::vector<PerturbationField> fields;
  ForwardTrace clean_trace;
  TensorPtr clean_loss;
};

/// Per position, the single direction with the largest |d loss / d alpha|,
/// signed so the perturbation increases the loss to first order.
IadvtBestResult iadvt_best_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 const std::vector<SentenceNeighbors>& nbrs,
                                 double eps);

// ---------------------------------------------------------------------------
// Single-example entry points (evaluation mode, fresh tape per call).
// ---------------------------------------------------------------------------

PerturbationField advt_perturb(const ModelParams& params,
                               const SentenceExample& example, double eps);

AlphaWeights iadvt_alpha(const ModelParams& params,
                         const SentenceExample& example,
                         const SentenceNeighbors& neighbors, double eps);

PerturbationField vat_perturb(const ModelParams& params,
                              const SentenceExample& example, double eps,
                              double xi, std::mt19937_64& rng);

AlphaWeights ivat_alpha(const ModelParams& params,
                        const SentenceExample& example,
                        const SentenceNeighbors& neighbors, double eps,
                        double xi, std::mt19937_64& rng);

PerturbationField random_perturb(const SentenceExample& example, int dim,
                                 double eps, std::mt19937_64& rng);

PerturbationField iadvt_rand(const SentenceExample& example,
                             const SentenceNeighbors& neighbors, double eps,
                             std::mt19937_64& rng);

PerturbationField iadvt_best(const ModelParams& params,
                             const SentenceExample& example,
                             const SentenceNeighbors& neighbors, double eps);

}  // namespace iadvtext
