#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "interpret.hpp"

namespace iadvtext {

const char* method_name(Method m) {
  switch (m) {
    case Method::kBaseline: return "baseline";
    case Method::kRandom: return "random";
    case Method::kAdvt: return "advt";
    case Method::kIadvt: return "iadvt";
    case Method::kIadvtRand: return "iadvt-rand";
    case Method::kIadvtBest: return "iadvt-best";
    case Method::kVat: return "vat";
    case Method::kIvat: return "ivat";
  }
  return "baseline";
}

Method method_from_name(const std::string& name) {
  for (Method m : {Method::kBaseline, Method::kRandom, Method::kAdvt,
                   Method::kIadvt, Method::kIadvtRand, Method::kIadvtBest,
                   Method::kVat, Method::kIvat})
    if (name == method_name(m)) return m;
  fail(ErrorKind::kConfig, "unknown method: " + name);
  return Method::kBaseline;
}

bool method_needs_labels(Method m) {
  return m == Method::kAdvt || m == Method::kIadvt || m == Method::kIadvtRand ||
         m == Method::kIadvtBest;
}

bool method_uses_neighbors(Method m) {
  return m == Method::kIadvt || m == Method::kIadvtRand ||
         m == Method::kIadvtBest || m == Method::kIvat;
}

bool method_uses_kl(Method m) {
  return m == Method::kVat || m == Method::kIvat;
}

void TrainConfig::validate() const {
  if (method != Method::kBaseline && epsilon <= 0.0)
    fail(ErrorKind::kConfig, "epsilon must be > 0 for method " +
                                 std::string(method_name(method)));
  if (lambda < 0.0) fail(ErrorKind::kConfig, "lambda must be >= 0");
  if (method_uses_neighbors(method) && k_neighbors < 1)
    fail(ErrorKind::kConfig, "k_neighbors must be >= 1 for method " +
                                 std::string(method_name(method)));
  if (method_uses_kl(method) && xi <= 0.0)
    fail(ErrorKind::kConfig, "xi must be > 0 for method " +
                                 std::string(method_name(method)));
  if (batch_size < 1) fail(ErrorKind::kConfig, "batch_size must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    fail(ErrorKind::kConfig, "dropout must be in [0,1)");
  if (max_epochs < 1) fail(ErrorKind::kConfig, "max_epochs must be >= 1");
  if (emb_dim < 1 || hidden_dim < 1 || ffnn_dim < 1)
    fail(ErrorKind::kConfig, "model dimensions must be positive");
}

namespace {

double example_count(const std::vector<SentenceExample>& batch) {
  return static_cast<double>(batch.size());
}

// Perturbed forward over constant fields, reusing the embedded batch.
TensorPtr adv_nll(Tape& tape, const ModelParams& params,
                  const EmbeddedBatch& eb, const Batch& batch,
                  const std::vector<PerturbationField>& fields) {
  auto addends = [&] {
    std::vector<TensorPtr> a(batch.steps);
    for (int t = 0; t < batch.steps; ++t) {
      std::vector<double> v(static_cast<size_t>(batch.size) * params.emb_dim,
                            0.0);
      for (int b = 0; b < batch.size; ++b) {
        if (t >= static_cast<int>(fields[b].r.size())) continue;
        for (int i = 0; i < params.emb_dim; ++i)
          v[static_cast<size_t>(b) * params.emb_dim + i] = fields[b].r[t][i];
      }
      a[t] = tape.constant(batch.size, params.emb_dim, std::move(v));
    }
    return a;
  }();
  auto trace = forward_with_field(tape, params, eb, batch, addends);
  return nll_loss(tape, trace, batch.labels, batch.mask);
}

TensorPtr adv_kl(Tape& tape, const ModelParams& params, const EmbeddedBatch& eb,
                 const Batch& batch, const ForwardTrace& clean_trace,
                 const std::vector<PerturbationField>& fields) {
  std::vector<TensorPtr> addends(batch.steps);
  for (int t = 0; t < batch.steps; ++t) {
    std::vector<double> v(static_cast<size_t>(batch.size) * params.emb_dim,
                          0.0);
    for (int b = 0; b < batch.size; ++b) {
      if (t >= static_cast<int>(fields[b].r.size())) continue;
      for (int i = 0; i < params.emb_dim; ++i)
        v[static_cast<size_t>(b) * params.emb_dim + i] = fields[b].r[t][i];
    }
    addends[t] = tape.constant(batch.size, params.emb_dim, std::move(v));
  }
  auto trace = forward_with_field(tape, params, eb, batch, addends);
  return kl_loss(tape, clean_trace, trace, batch.mask);
}

}  // namespace

ObjectiveParts joint_objective(
    Tape& tape, const ModelParams& params,
    const std::vector<SentenceExample>& labeled_batch,
    const std::vector<SentenceExample>& kl_batch,
    const std::vector<SentenceNeighbors>& labeled_nbrs,
    const std::vector<SentenceNeighbors>& kl_nbrs, const TrainConfig& cfg,
    std::mt19937_64& rng) {
  if (labeled_batch.empty()) fail_runtime("joint_objective: empty batch");
  if (method_needs_labels(cfg.method)) {
    for (const auto& e : labeled_batch)
      if (!e.labeled())
        fail_runtime(std::string("method ") + method_name(cfg.method) +
                     " requires labeled examples");
  }

  const PerturbStage stage = cfg.perturb_before_dropout
                                 ? PerturbStage::kBeforeDropout
                                 : PerturbStage::kAfterDropout;
  Batch batch = make_batch(labeled_batch, cfg.task);
  auto eb = embed_batch(tape, params, batch, cfg.dropout,
                        cfg.dropout > 0.0 ? &rng : nullptr, stage);

  ObjectiveParts parts;
  const double n = example_count(labeled_batch);

  // A zero lambda reduces every method to the clean objective.
  if (cfg.method == Method::kBaseline || cfg.lambda == 0.0) {
    auto trace = forward_with_field(tape, params, eb, batch);
    auto loss = nll_loss(tape, trace, batch.labels, batch.mask);
    parts.total = tape.scale(loss, 1.0 / n);
    parts.clean_value = parts.total->scalar();
    parts.adv_value = 0.0;
    return parts;
  }

  TensorPtr clean_loss;   // summed over labeled batch
  TensorPtr adv_term;     // summed over its batch
  double adv_n = n;

  switch (cfg.method) {
    case Method::kAdvt: {
      auto res = advt_perturb_batch(tape, params, eb, batch, cfg.epsilon);
      clean_loss = res.clean_loss;
      adv_term = adv_nll(tape, params, eb, batch, res.fields);
      break;
    }
    case Method::kIadvt: {
      auto res = iadvt_alpha_batch(tape, params, eb, batch, labeled_nbrs,
                                   cfg.epsilon);
      clean_loss = res.clean_loss;
      adv_term = adv_nll(tape, params, eb, batch, res.fields);
      break;
    }
    case Method::kIadvtBest: {
      auto res = iadvt_best_batch(tape, params, eb, batch, labeled_nbrs,
                                  cfg.epsilon);
      clean_loss = res.clean_loss;
      adv_term = adv_nll(tape, params, eb, batch, res.fields);
      break;
    }
    case Method::kIadvtRand: {
      auto trace = forward_with_field(tape, params, eb, batch);
      clean_loss = nll_loss(tape, trace, batch.labels, batch.mask);
      auto fields = iadvt_rand_batch(batch, labeled_nbrs, cfg.epsilon, rng);
      adv_term = adv_nll(tape, params, eb, batch, fields);
      break;
    }
    case Method::kRandom: {
      auto trace = forward_with_field(tape, params, eb, batch);
      clean_loss = nll_loss(tape, trace, batch.labels, batch.mask);
      if (kl_batch.empty()) {
        // Supervised flavor: random field in place of r_AdvT.
        auto fields =
            random_perturb_batch(batch, params.emb_dim, cfg.epsilon, rng);
        adv_term = adv_nll(tape, params, eb, batch, fields);
      } else {
        // Semi-supervised flavor: random field in place of r_VAT.
        Batch kb = make_batch(kl_batch, cfg.task);
        auto keb = embed_batch(tape, params, kb, cfg.dropout,
                               cfg.dropout > 0.0 ? &rng : nullptr, stage);
        auto clean_trace = forward_with_field(tape, params, keb, kb);
        auto fields =
            random_perturb_batch(kb, params.emb_dim, cfg.epsilon, rng);
        adv_term = adv_kl(tape, params, keb, kb, clean_trace, fields);
        adv_n = example_count(kl_batch);
      }
      break;
    }
    case Method::kVat:
    case Method::kIvat: {
      auto trace = forward_with_field(tape, params, eb, batch);
      clean_loss = nll_loss(tape, trace, batch.labels, batch.mask);
      const auto& kexamples = kl_batch.empty() ? labeled_batch : kl_batch;
      Batch kb = make_batch(kexamples, cfg.task);
      auto keb = embed_batch(tape, params, kb, cfg.dropout,
                             cfg.dropout > 0.0 ? &rng : nullptr, stage);
      if (cfg.method == Method::kVat) {
        auto res =
            vat_perturb_batch(tape, params, keb, kb, cfg.epsilon, cfg.xi, rng);
        adv_term = adv_kl(tape, params, keb, kb, res.clean_trace, res.fields);
      } else {
        auto res = ivat_alpha_batch(tape, params, keb, kb, kl_nbrs,
                                    cfg.epsilon, cfg.xi, rng);
        adv_term = adv_kl(tape, params, keb, kb, res.clean_trace, res.fields);
      }
      adv_n = example_count(kexamples);
      break;
    }
    case Method::kBaseline:
      break;  // handled above
  }

  auto clean_mean = tape.scale(clean_loss, 1.0 / n);
  auto adv_mean = tape.scale(adv_term, 1.0 / adv_n);
  parts.total = tape.add(clean_mean, tape.scale(adv_mean, cfg.lambda));
  parts.clean_value = clean_mean->scalar();
  parts.adv_value = adv_mean->scalar();
  return parts;
}

int best_index(const std::vector<double>& scores) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(scores.size()); ++i)
    if (scores[i] > scores[best]) best = i;
  return best;
}

bool should_stop(const std::vector<double>& scores, int patience) {
  if (scores.empty() || patience < 1) return false;
  const int since_best = static_cast<int>(scores.size()) - 1 - best_index(scores);
  return since_best >= patience;
}

AdamState init_adam(const ModelParams& params, double lr0) {
  AdamState s;
  s.lr = lr0;
  for (const auto& [name, t] : params.named_parameters()) {
    (void)name;
    s.m.emplace_back(t->values.size(), 0.0);
    s.v.emplace_back(t->values.size(), 0.0);
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state, const TrainConfig& cfg) {
  auto named = params.named_parameters();
  std::vector<std::vector<double>> grads;
  grads.reserve(named.size());
  for (const auto& [name, t] : named) {
    (void)name;
    grads.push_back(t->grad_or_zero());
  }

  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& g : grads)
      for (double x : g) sq += x * x;
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const double s = cfg.grad_clip / norm;
      for (auto& g : grads)
        for (double& x : g) x *= s;
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.step);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.step);
  for (size_t p = 0; p < named.size(); ++p) {
    auto& t = named[p].second;
    auto& m = state.m[p];
    auto& v = state.v[p];
    const auto& g = grads[p];
    for (size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      t->values[i] -= state.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
    check_finite(*t, named[p].first.c_str());
    t->grad.clear();  // consumed; the next backward must start clean
  }
  state.lr *= cfg.decay_rate;
}

Trainer::Trainer(TrainConfig cfg, Vocabulary vocab, int n_classes,
                 std::vector<SentenceExample> train,
                 std::vector<SentenceExample> unlabeled,
                 std::vector<SentenceExample> dev)
    : cfg_(std::move(cfg)),
      vocab_(std::move(vocab)),
      train_(std::move(train)),
      unlabeled_(std::move(unlabeled)),
      dev_(std::move(dev)),
      cache_(cfg_.k_neighbors, cfg_.neighbor_refresh_interval,
             cfg_.cosine_neighbors),
      rng_(cfg_.seed) {
  cfg_.validate();
  if (train_.empty()) fail(ErrorKind::kData, "training set is empty");
  params_ = init_model(cfg_.task, vocab_.size(), cfg_.emb_dim, cfg_.hidden_dim,
                       cfg_.ffnn_dim, n_classes, rng_);
  if (!cfg_.pretrained_vectors.empty())
    load_pretrained_vectors(cfg_.pretrained_vectors, vocab_,
                            params_.embedding);
  adam_ = init_adam(params_, cfg_.learning_rate);

  if (cfg_.normalize_embeddings) {
    std::vector<long> counts(vocab_.size(), 0);
    long total = 0;
    for (const auto* set : {&train_, &unlabeled_})
      for (const auto& e : *set)
        for (int id : e.ids) {
          ++counts[id];
          ++total;
        }
    token_freq_.assign(vocab_.size(), 0.0);
    if (total > 0)
      for (int i = 0; i < vocab_.size(); ++i)
        token_freq_[i] = static_cast<double>(counts[i]) / total;
  }
}

std::vector<SentenceNeighbors> Trainer::batch_neighbors(
    const std::vector<SentenceExample>& batch) {
  std::vector<SentenceNeighbors> out;
  out.reserve(batch.size());
  for (const auto& e : batch)
    out.push_back(cache_.get(params_.embedding, vocab_, e.ids));
  return out;
}

EpochLog Trainer::train_epoch() {
  ++epoch_;
  std::vector<size_t> order(train_.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng_);

  const bool wants_unlabeled =
      method_uses_kl(cfg_.method) || cfg_.method == Method::kRandom;
  if (wants_unlabeled && !unlabeled_.empty() && unlabeled_order_.empty()) {
    unlabeled_order_.resize(unlabeled_.size());
    for (size_t i = 0; i < unlabeled_order_.size(); ++i)
      unlabeled_order_[i] = i;
    std::shuffle(unlabeled_order_.begin(), unlabeled_order_.end(), rng_);
  }

  double loss_sum = 0.0;
  double adv_sum = 0.0;
  long batches = 0;

  for (size_t begin = 0; begin < order.size();
       begin += static_cast<size_t>(cfg_.batch_size)) {
    const size_t end = std::min(order.size(),
                                begin + static_cast<size_t>(cfg_.batch_size));
    std::vector<SentenceExample> batch;
    batch.reserve(end - begin);
    for (size_t i = begin; i < end; ++i) batch.push_back(train_[order[i]]);

    // Mixed 1:1 labeled/unlabeled batch for the KL term.
    std::vector<SentenceExample> kl_batch;
    if (method_uses_kl(cfg_.method) ||
        (cfg_.method == Method::kRandom && !unlabeled_.empty())) {
      if (unlabeled_.empty()) {
        kl_batch = batch;  // supervised-KL degenerate case
      } else {
        const size_t half = (batch.size() + 1) / 2;
        for (size_t i = 0; i < half && i < batch.size(); ++i)
          kl_batch.push_back(batch[i]);
        for (size_t i = 0; i < batch.size() - half; ++i) {
          if (unlabeled_cursor_ >= unlabeled_order_.size()) {
            std::shuffle(unlabeled_order_.begin(), unlabeled_order_.end(),
                         rng_);
            unlabeled_cursor_ = 0;
          }
          auto ex = unlabeled_[unlabeled_order_[unlabeled_cursor_++]];
          ex.labels.clear();
          kl_batch.push_back(std::move(ex));
        }
      }
    }

    cache_.tick();
    std::vector<SentenceNeighbors> labeled_nbrs, kl_nbrs;
    if (method_uses_neighbors(cfg_.method)) {
      if (cfg_.method == Method::kIvat)
        kl_nbrs = batch_neighbors(kl_batch.empty() ? batch : kl_batch);
      else
        labeled_nbrs = batch_neighbors(batch);
    }

    Tape tape;
    tape.adopt(params_.embedding.rows);
    auto parts = joint_objective(tape, params_, batch, kl_batch, labeled_nbrs,
                                 kl_nbrs, cfg_, rng_);
    tape.backward(parts.total);
    adam_step(params_, adam_, cfg_);

    if (cfg_.normalize_embeddings && !token_freq_.empty()) {
      auto& e = *params_.embedding.rows;
      for (int d = 0; d < e.cols; ++d) {
        double mean = 0.0;
        for (int k = 0; k < e.rows; ++k) mean += token_freq_[k] * e.at(k, d);
        double var = 0.0;
        for (int k = 0; k < e.rows; ++k) {
          const double diff = e.at(k, d) - mean;
          var += token_freq_[k] * diff * diff;
        }
        const double sd = std::sqrt(var + 1e-12);
        for (int k = 0; k < e.rows; ++k)
          e.at(k, d) = (e.at(k, d) - mean) / sd;
      }
    }

    loss_sum += parts.clean_value;
    adv_sum += parts.adv_value;
    ++batches;
    ++steps_;
  }

  EpochLog log;
  log.epoch = epoch_;
  log.steps = steps_;
  log.lr = adam_.lr;
  log.train_loss = batches > 0 ? loss_sum / batches : 0.0;
  log.adv_loss = batches > 0 ? adv_sum / batches : 0.0;
  return log;
}

double Trainer::dev_metric() {
  auto pred = predict(params_, dev_);
  if (cfg_.task == Task::kClassify)
    return error_rate(pred.labels, pred.gold);
  return f_half_score(pred.labels, pred.gold).f_half;
}

TrainOutcome Trainer::run(std::ostream* log) {
  TrainOutcome out;
  std::vector<double> scores;  // higher is better
  for (int epoch = 1; epoch <= cfg_.max_epochs; ++epoch) {
    EpochLog el = train_epoch();
    el.dev_metric = dev_.empty() ? 0.0 : dev_metric();
    out.history.push_back(el);

    if (log) {
      char line[256];
      std::snprintf(line, sizeof line, "%d\t%ld\t%.10g\t%.6f\t%.6f\t%.6f",
                    el.epoch, el.steps, el.lr, el.train_loss, el.adv_loss,
                    el.dev_metric);
      (*log) << line << '\n';
      log->flush();
    }

    const double score =
        cfg_.task == Task::kClassify ? -el.dev_metric : el.dev_metric;
    scores.push_back(score);
    if (best_index(scores) == static_cast<int>(scores.size()) - 1) {
      out.best = params_.clone();
      out.best_epoch = epoch;
      out.best_metric = el.dev_metric;
    }
    if (should_stop(scores, cfg_.patience)) break;
  }
  out.total_steps = steps_;
  if (out.best_epoch == 0) {
    out.best = params_.clone();
    out.best_epoch = epoch_;
  }
  return out;
}

}  // namespace iadvtext
