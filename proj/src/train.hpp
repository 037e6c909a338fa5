#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "perturb.hpp"

namespace iadvtext {

enum class Method {
  kBaseline,
  kRandom,
  kAdvt,
  kIadvt,
  kIadvtRand,
  kIadvtBest,
  kVat,
  kIvat,
};

const char* method_name(Method m);
Method method_from_name(const std::string& name);
/// advt/iadvt/iadvt-rand/iadvt-best train on labeled examples only; vat/ivat
/// (and random, when unlabeled data is present) use the label-free KL term.
bool method_needs_labels(Method m);
bool method_uses_neighbors(Method m);
bool method_uses_kl(Method m);

struct TrainConfig {
  Task task = Task::kClassify;
  Method method = Method::kBaseline;

  // Perturbation
  double epsilon = 0.0;  // resolved default: 5.0 advt/vat/random, 15.0 i-*
  double lambda = 1.0;
  int k_neighbors = 10;
  double xi = 0.0;  // resolved default: 0.1 * epsilon
  int neighbor_refresh_interval = 1;

  // Model shape
  int emb_dim = 256;
  int hidden_dim = 1024;
  int ffnn_dim = 30;

  // Optimization
  int batch_size = 32;
  double learning_rate = 0.001;
  double decay_rate = 0.9998;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double dropout = 0.5;
  double grad_clip = 0.0;  // 0 = off
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 1;

  // Vocabulary / embeddings
  int min_freq = 1;
  int max_vocab = 0;  // 0 = unlimited
  std::string pretrained_vectors;
  bool normalize_embeddings = false;
  bool cosine_neighbors = false;
  bool perturb_before_dropout = false;
  bool attack_rank_by_field_norm = false;

  void validate() const;
};

/// One clean-plus-adversarial objective for one step. `kl_batch` feeds the
/// virtual-adversarial term and may mix labeled and unlabeled examples; it is
/// ignored by purely supervised methods.
struct ObjectiveParts {
  TensorPtr total;     // mean clean loss + lambda * mean adversarial term
  double clean_value;  // mean clean NLL over the labeled batch
  double adv_value;    // mean adversarial/KL term, 0 for baseline
};

ObjectiveParts joint_objective(
    Tape& tape, const ModelParams& params,
    const std::vector<SentenceExample>& labeled_batch,
    const std::vector<SentenceExample>& kl_batch,
    const std::vector<SentenceNeighbors>& labeled_nbrs,
    const std::vector<SentenceNeighbors>& kl_nbrs, const TrainConfig& cfg,
    std::mt19937_64& rng);

// -- Early stopping ----------------------------------------------------------

/// Index of the best score, ties to the earliest occurrence.
int best_index(const std::vector<double>& scores_higher_better);
/// True once the score has not improved for `patience` consecutive entries.
bool should_stop(const std::vector<double>& scores_higher_better, int patience);

// -- Optimizer ----------------------------------------------------------------

struct AdamState {
  double lr = 0.0;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState init_adam(const ModelParams& params, double lr0);
/// One update from the gradients currently on the parameter tensors.
void adam_step(ModelParams& params, AdamState& state, const TrainConfig& cfg);

// -- Training loop ------------------------------------------------------------

struct EpochLog {
  int epoch = 0;       // 1-based
  long steps = 0;      // cumulative optimizer steps
  double lr = 0.0;     // after this epoch's decay
  double train_loss = 0.0;
  double adv_loss = 0.0;
  double dev_metric = 0.0;  // error rate (classify) or F0.5 (tag)
};

struct TrainOutcome {
  ModelParams best;
  int best_epoch = 0;  // 1-based
  double best_metric = 0.0;
  std::vector<EpochLog> history;
  long total_steps = 0;
};

class Trainer {
 public:
  Trainer(TrainConfig cfg, Vocabulary vocab, int n_classes,
          std::vector<SentenceExample> train,
          std::vector<SentenceExample> unlabeled,
          std::vector<SentenceExample> dev);

  /// Trains with early stopping; emits one tab-separated line per epoch to
  /// `log` when given. Columns: epoch, steps, lr, train_loss, adv_loss,
  /// dev_metric.
  TrainOutcome run(std::ostream* log = nullptr);

  /// One pass over the shuffled training data (the per-epoch building block
  /// of run()).
  EpochLog train_epoch();

  ModelParams& params() { return params_; }
  const Vocabulary& vocab() const { return vocab_; }
  double dev_metric();

 private:
  std::vector<SentenceNeighbors> batch_neighbors(
      const std::vector<SentenceExample>& batch);

  TrainConfig cfg_;
  Vocabulary vocab_;
  std::vector<SentenceExample> train_;
  std::vector<SentenceExample> unlabeled_;
  std::vector<SentenceExample> dev_;
  ModelParams params_;
  AdamState adam_;
  NeighborCache cache_;
  std::mt19937_64 rng_;
  std::vector<double> token_freq_;  // for optional embedding normalization
  std::vector<size_t> unlabeled_order_;
  size_t unlabeled_cursor_ = 0;
  int epoch_ = 0;
  long steps_ = 0;
  bool warned_no_unlabeled_ = false;
};

}  // namespace iadvtext
