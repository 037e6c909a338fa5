#pragma once

#include <random>
#include <vector>

#include "model.hpp"

namespace iadvtext {

/// Examples padded to a common length, position-major: ids[t][b].
struct Batch {
  int size = 0;
  int steps = 0;
  bool labeled = false;
  std::vector<std::vector<int>> ids;      // [T][B], kPad past each end
  std::vector<std::vector<double>> mask;  // [T][B]
  std::vector<std::vector<int>> labels;   // classify: [1][B]; tag: [T][B]
  std::vector<int> lengths;               // [B]
};

Batch make_batch(const std::vector<const SentenceExample*>& examples,
                 Task task);
Batch make_batch(const std::vector<SentenceExample>& examples, Task task);

/// Whether perturbations see embeddings before or after dropout.
enum class PerturbStage { kAfterDropout, kBeforeDropout };

/// Per-position embedding nodes for one batch. `targets[t]` are the tensors
/// perturbations are added to and input gradients are read from.
struct EmbeddedBatch {
  std::vector<TensorPtr> targets;               // [T] of [B,D]
  std::vector<std::vector<double>> drop_masks;  // kBeforeDropout only
  PerturbStage stage = PerturbStage::kAfterDropout;
  bool train_mode = false;
  double dropout_rate = 0.0;
};

/// rng may be null for evaluation mode (no dropout).
EmbeddedBatch embed_batch(Tape& tape, const ModelParams& params,
                          const Batch& batch, double dropout_rate,
                          std::mt19937_64* rng,
                          PerturbStage stage = PerturbStage::kAfterDropout);

/// Runs the model over the embedded batch with optional per-position addends
/// (perturbations, as constants or as tape nodes). Fills `used_inputs` with
/// the actual per-position model inputs, the point VAT gradients are taken
/// at.
ForwardTrace forward_with_field(Tape& tape, const ModelParams& params,
                                const EmbeddedBatch& eb, const Batch& batch,
                                const std::vector<TensorPtr>& addends = {},
                                std::vector<TensorPtr>* used_inputs = nullptr);

/// Argmax predictions in evaluation mode. Classification: one class id per
/// example. Tagging: per-position ids for real positions, concatenated in
/// example order.
struct Predictions {
  std::vector<int> labels;        // flattened predictions
  std::vector<int> gold;          // aligned gold labels (empty if unlabeled)
};

Predictions predict(const ModelParams& params,
                    const std::vector<SentenceExample>& examples,
                    int eval_batch = 64);

/// Mean per-example NLL in evaluation mode.
double mean_nll(const ModelParams& params,
                const std::vector<SentenceExample>& examples,
                int eval_batch = 64);

}  // namespace iadvtext
