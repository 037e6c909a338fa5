#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "tensor.hpp"
#include "vocab_embed.hpp"

namespace iadvtext {

enum class Task { kClassify, kTag };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

/// Fused gate weights, gate order [input | forget | candidate | output].
struct LstmParams {
  TensorPtr wx;  // [D, 4H]
  TensorPtr wh;  // [H, 4H]
  TensorPtr b;   // [1, 4H]
};

struct FfnnParams {
  TensorPtr w1;  // [in, F]
  TensorPtr b1;  // [1, F]
  TensorPtr w2;  // [F, |Y|]
  TensorPtr b2;  // [1, |Y|]
};

struct ModelParams {
  Task task = Task::kClassify;
  int emb_dim = 0;
  int hidden_dim = 0;
  int ffnn_dim = 0;
  int n_classes = 0;

  EmbeddingMatrix embedding;
  LstmParams fwd;
  LstmParams bwd;  // tagging only
  FfnnParams head;

  /// Stable (name, tensor) order shared by the optimizer and checkpoints.
  std::vector<std::pair<std::string, TensorPtr>> named_parameters() const;
  ModelParams clone() const;
};

/// Weights uniform(-0.1, 0.1), biases zero except forget gate bias 1.0,
/// embeddings N(0,1)/sqrt(D).
ModelParams init_model(Task task, int vocab_size, int emb_dim, int hidden_dim,
                       int ffnn_dim, int n_classes, std::mt19937_64& rng);

/// One token id sequence plus its labels. `labels` holds one class id for
/// classification and one per step for tagging; empty when unlabeled.
/// `mask[t]` = 0 marks padding.
struct SentenceExample {
  std::vector<int> ids;
  std::vector<int> labels;
  std::vector<double> mask;  // defaults to all ones when empty

  int length() const { return static_cast<int>(ids.size()); }
  bool labeled() const { return !labels.empty(); }
  double mask_at(int t) const { return mask.empty() ? 1.0 : mask[t]; }
};

/// Model outputs for one batch: hidden states, logits and log-probabilities.
/// Classification carries one entry; tagging carries one per step.
struct ForwardTrace {
  Task task = Task::kClassify;
  int batch = 0;
  int steps = 0;
  std::vector<TensorPtr> hidden;  // [T] of [B,H] (or [B,2H] for tagging)
  std::vector<TensorPtr> logits;  // classify: 1 x [B,C]; tag: T x [B,C]
  std::vector<TensorPtr> logp;    // log_softmax of each logits entry

  /// Probability rows, exp(logp); classify: probs(0), tag: probs(t).
  std::vector<double> probs(int step) const;
};

std::pair<TensorPtr, TensorPtr> lstm_step(Tape& tape, const LstmParams& p,
                                          const TensorPtr& w,
                                          const TensorPtr& h_prev,
                                          const TensorPtr& c_prev);

/// Forward passes over already-embedded (and possibly perturbed) inputs.
/// `embedded[t]` is [B, D]; `mask[t]` has B entries, 0 for padding.
/// Dropout applies to word embeddings only and is the caller's concern.
ForwardTrace classify(Tape& tape, const ModelParams& params,
                      const std::vector<TensorPtr>& embedded,
                      const std::vector<std::vector<double>>& mask);
ForwardTrace tag(Tape& tape, const ModelParams& params,
                 const std::vector<TensorPtr>& embedded,
                 const std::vector<std::vector<double>>& mask);
ForwardTrace model_forward(Tape& tape, const ModelParams& params,
                           const std::vector<TensorPtr>& embedded,
                           const std::vector<std::vector<double>>& mask);

/// Sum over the batch (and unmasked steps) of -log p(label). Divide by the
/// example count for the mean objective.
TensorPtr nll_loss(Tape& tape, const ForwardTrace& trace,
                   const std::vector<std::vector<int>>& labels,
                   const std::vector<std::vector<double>>& mask);

/// KL(p_clean || p_perturbed) summed over the batch and unmasked steps. The
/// clean distribution is a constant: no gradient flows through it.
TensorPtr kl_loss(Tape& tape, const ForwardTrace& clean,
                  const ForwardTrace& perturbed,
                  const std::vector<std::vector<double>>& mask);

/// KL of two explicit distributions; p may contain exact zeros.
double kl_divergence(const std::vector<double>& p,
                     const std::vector<double>& logp,
                     const std::vector<double>& logq);

}  // namespace iadvtext
