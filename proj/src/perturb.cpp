#include "perturb.hpp"

#include <cmath>

namespace iadvtext {

double PerturbationField::concat_norm() const {
  double s = 0.0;
  for (const auto& row : r)
    for (double x : row) s += x * x;
  return std::sqrt(s);
}

bool PerturbationField::is_zero() const {
  for (const auto& row : r)
    for (double x : row)
      if (x != 0.0) return false;
  return true;
}

double AlphaWeights::concat_norm() const {
  double s = 0.0;
  for (const auto& row : a)
    for (double x : row) s += x * x;
  return std::sqrt(s);
}

PerturbationField alpha_to_perturbation(const AlphaWeights& alpha,
                                        const SentenceNeighbors& neighbors) {
  if (alpha.a.size() != neighbors.ids.size())
    fail_runtime("alpha_to_perturbation: alpha covers " +
                 std::to_string(alpha.a.size()) + " positions, directions " +
                 std::to_string(neighbors.ids.size()));
  const int d = neighbors.dim;
  PerturbationField field;
  field.dim = d;
  field.r.assign(alpha.a.size(), std::vector<double>(d, 0.0));
  for (size_t t = 0; t < alpha.a.size(); ++t) {
    if (alpha.a[t].size() != neighbors.ids[t].size())
      fail_runtime("alpha_to_perturbation: position " + std::to_string(t) +
                   " has " + std::to_string(alpha.a[t].size()) +
                   " weights for " + std::to_string(neighbors.ids[t].size()) +
                   " directions");
    for (size_t k = 0; k < alpha.a[t].size(); ++k) {
      const double w = alpha.a[t][k];
      if (w == 0.0) continue;
      const double* dir = neighbors.dirs[t].data() + k * d;
      for (int i = 0; i < d; ++i) field.r[t][i] += w * dir[i];
    }
  }
  return field;
}

namespace {

// Scales a per-example concatenation of rows to norm eps, or zeroes it when
// the norm is below the vanishing cutoff. Rows are edited in place.
void normalize_rows(std::vector<std::vector<double>>& rows, double eps) {
  double s = 0.0;
  for (const auto& row : rows)
    for (double x : row) s += x * x;
  const double norm = std::sqrt(s);
  if (norm < kVanishingGradNorm) {
    for (auto& row : rows) std::fill(row.begin(), row.end(), 0.0);
    return;
  }
  const double scale = eps / norm;
  for (auto& row : rows)
    for (double& x : row) x *= scale;
}

// Extracts the per-example, per-position gradient rows from a list of [B,*]
// tensors, zeroing masked positions.
std::vector<std::vector<std::vector<double>>> per_example_grads(
    const std::vector<TensorPtr>& nodes, const Batch& batch) {
  const int cols = nodes.empty() ? 0 : nodes[0]->cols;
  std::vector<std::vector<std::vector<double>>> out(
      batch.size, std::vector<std::vector<double>>(
                      batch.steps, std::vector<double>(cols, 0.0)));
  for (int t = 0; t < batch.steps; ++t) {
    const auto& g = nodes[t]->grad;
    if (g.empty()) continue;
    for (int b = 0; b < batch.size; ++b) {
      if (batch.mask[t][b] == 0.0) continue;
      const size_t off = static_cast<size_t>(b) * cols;
      for (int i = 0; i < cols; ++i) out[b][t][i] = g[off + i];
    }
  }
  return out;
}

std::vector<PerturbationField> fields_from_grads(
    const std::vector<TensorPtr>& nodes, const Batch& batch, double eps) {
  auto grads = per_example_grads(nodes, batch);
  std::vector<PerturbationField> fields(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    normalize_rows(grads[b], eps);
    fields[b].dim = nodes.empty() ? 0 : nodes[0]->cols;
    fields[b].r = std::move(grads[b]);
  }
  return fields;
}

// Constant [B,D] addend tensors assembled from per-example fields.
std::vector<TensorPtr> field_addends(Tape& tape,
                                     const std::vector<PerturbationField>& f,
                                     const Batch& batch, int dim) {
  std::vector<TensorPtr> addends(batch.steps);
  for (int t = 0; t < batch.steps; ++t) {
    std::vector<double> v(static_cast<size_t>(batch.size) * dim, 0.0);
    for (int b = 0; b < batch.size; ++b) {
      if (t >= static_cast<int>(f[b].r.size())) continue;
      for (int i = 0; i < dim; ++i)
        v[static_cast<size_t>(b) * dim + i] = f[b].r[t][i];
    }
    addends[t] = tape.constant(batch.size, dim, std::move(v));
  }
  return addends;
}

int max_neighbors(const std::vector<SentenceNeighbors>& nbrs) {
  int k = 0;
  for (const auto& sn : nbrs)
    for (const auto& ids : sn.ids) k = std::max(k, static_cast<int>(ids.size()));
  return k;
}

// Basis blob [B*K*D] for one position, padded with zero directions.
std::vector<double> position_basis(const std::vector<SentenceNeighbors>& nbrs,
                                   const Batch& batch, int t, int k, int d) {
  std::vector<double> basis(static_cast<size_t>(batch.size) * k * d, 0.0);
  for (int b = 0; b < batch.size; ++b) {
    const auto& sn = nbrs[b];
    if (t >= sn.positions() || batch.mask[t][b] == 0.0) continue;
    std::copy(sn.dirs[t].begin(), sn.dirs[t].end(),
              basis.begin() + (static_cast<size_t>(b) * k) * d);
  }
  return basis;
}

// Per-example alpha rows ([T][k_t]) from the [B,K] alpha tensors' grads.
std::vector<AlphaWeights> alphas_from_grads(
    const std::vector<TensorPtr>& alpha_nodes, const Batch& batch,
    const std::vector<SentenceNeighbors>& nbrs, int k) {
  std::vector<AlphaWeights> out(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    const auto& sn = nbrs[b];
    out[b].a.resize(sn.positions());
    for (int t = 0; t < sn.positions(); ++t) {
      const int kt = static_cast<int>(sn.ids[t].size());
      out[b].a[t].assign(kt, 0.0);
      if (t >= batch.steps || batch.mask[t][b] == 0.0) continue;
      const auto& g = alpha_nodes[t]->grad;
      if (g.empty()) continue;
      for (int kk = 0; kk < kt; ++kk)
        out[b].a[t][kk] = g[static_cast<size_t>(b) * k + kk];
    }
  }
  return out;
}

void normalize_alpha(AlphaWeights& alpha, double eps) {
  normalize_rows(alpha.a, eps);
}

TensorPtr batch_nll(Tape& tape, const ForwardTrace& trace, const Batch& batch) {
  if (!batch.labeled)
    fail_runtime("labeled objective on an unlabeled batch");
  return nll_loss(tape, trace, batch.labels, batch.mask);
}

}  // namespace

AdvtBatchResult advt_perturb_batch(Tape& tape, const ModelParams& params,
                                   const EmbeddedBatch& eb, const Batch& batch,
                                   double eps) {
  if (eps <= 0.0) fail_runtime("advt_perturb: eps must be positive");
  AdvtBatchResult res;
  res.clean_trace = forward_with_field(tape, params, eb, batch);
  res.clean_loss = batch_nll(tape, res.clean_trace, batch);
  tape.backward(res.clean_loss);
  res.fields = fields_from_grads(eb.targets, batch, eps);
  tape.zero_grads();
  return res;
}

IadvtBatchResult iadvt_alpha_batch(Tape& tape, const ModelParams& params,
                                   const EmbeddedBatch& eb, const Batch& batch,
                                   const std::vector<SentenceNeighbors>& nbrs,
                                   double eps) {
  if (eps <= 0.0) fail_runtime("iadvt_alpha: eps must be positive");
  if (static_cast<int>(nbrs.size()) != batch.size)
    fail_runtime("iadvt_alpha: neighbors missing for some batch examples");
  const int d = params.emb_dim;
  const int k = max_neighbors(nbrs);
  if (k == 0) fail_runtime("iadvt_alpha: empty neighbor sets");

  IadvtBatchResult res;
  std::vector<TensorPtr> alpha_nodes(batch.steps);
  std::vector<TensorPtr> addends(batch.steps);
  for (int t = 0; t < batch.steps; ++t) {
    alpha_nodes[t] = tape.zeros(batch.size, k, /*requires_grad=*/true);
    addends[t] =
        tape.basis_combine(alpha_nodes[t], position_basis(nbrs, batch, t, k, d), d);
  }
  res.clean_trace = forward_with_field(tape, params, eb, batch, addends);
  res.clean_loss = batch_nll(tape, res.clean_trace, batch);
  tape.backward(res.clean_loss);
  res.raw = alphas_from_grads(alpha_nodes, batch, nbrs, k);
  tape.zero_grads();

  res.alphas = res.raw;
  res.fields.reserve(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    normalize_alpha(res.alphas[b], eps);
    res.fields.push_back(alpha_to_perturbation(res.alphas[b], nbrs[b]));
  }
  return res;
}

namespace {

std::vector<PerturbationField> gaussian_fields(const Batch& batch, int dim,
                                               double norm,
                                               std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<PerturbationField> fields(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    fields[b].dim = dim;
    fields[b].r.assign(batch.steps, std::vector<double>(dim, 0.0));
    for (int t = 0; t < batch.steps; ++t) {
      if (batch.mask[t][b] == 0.0) continue;
      for (int i = 0; i < dim; ++i) fields[b].r[t][i] = normal(rng);
    }
    normalize_rows(fields[b].r, norm);
  }
  return fields;
}

}  // namespace

VatBatchResult vat_perturb_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 double eps, double xi, std::mt19937_64& rng) {
  if (eps <= 0.0 || xi <= 0.0)
    fail_runtime("vat_perturb: eps and xi must be positive");
  VatBatchResult res;
  res.clean_trace = forward_with_field(tape, params, eb, batch);

  auto seed_fields = gaussian_fields(batch, params.emb_dim, xi, rng);
  auto addends = field_addends(tape, seed_fields, batch, params.emb_dim);
  std::vector<TensorPtr> perturbed_inputs;
  auto seeded_trace = forward_with_field(tape, params, eb, batch, addends,
                                         &perturbed_inputs);
  auto kl = kl_loss(tape, res.clean_trace, seeded_trace, batch.mask);
  tape.backward(kl);
  // Gradient at the perturbed point w + r, not at the raw embedding.
  res.fields = fields_from_grads(perturbed_inputs, batch, eps);
  tape.zero_grads();
  return res;
}

IvatBatchResult ivat_alpha_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 const std::vector<SentenceNeighbors>& nbrs,
                                 double eps, double xi, std::mt19937_64& rng) {
  if (eps <= 0.0 || xi <= 0.0)
    fail_runtime("ivat_alpha: eps and xi must be positive");
  const int d = params.emb_dim;
  const int k = max_neighbors(nbrs);
  if (k == 0) fail_runtime("ivat_alpha: empty neighbor sets");

  IvatBatchResult res;
  res.clean_trace = forward_with_field(tape, params, eb, batch);

  // Random alpha start of per-example norm xi; the KL gradient vanishes at
  // alpha = 0.
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<std::vector<double>>> seed(
      batch.size,
      std::vector<std::vector<double>>(batch.steps, std::vector<double>(k, 0.0)));
  for (int b = 0; b < batch.size; ++b) {
    for (int t = 0; t < batch.steps; ++t) {
      if (batch.mask[t][b] == 0.0 || t >= nbrs[b].positions()) continue;
      const int kt = static_cast<int>(nbrs[b].ids[t].size());
      for (int kk = 0; kk < kt; ++kk) seed[b][t][kk] = normal(rng);
    }
    normalize_rows(seed[b], xi);
  }

  std::vector<TensorPtr> alpha_nodes(batch.steps);
  std::vector<TensorPtr> addends(batch.steps);
  for (int t = 0; t < batch.steps; ++t) {
    std::vector<double> init(static_cast<size_t>(batch.size) * k, 0.0);
    for (int b = 0; b < batch.size; ++b)
      for (int kk = 0; kk < k; ++kk)
        init[static_cast<size_t>(b) * k + kk] = seed[b][t][kk];
    alpha_nodes[t] = tape.leaf(batch.size, k, std::move(init), true);
    addends[t] =
        tape.basis_combine(alpha_nodes[t], position_basis(nbrs, batch, t, k, d), d);
  }
  auto seeded_trace = forward_with_field(tape, params, eb, batch, addends);
  auto kl = kl_loss(tape, res.clean_trace, seeded_trace, batch.mask);
  tape.backward(kl);
  res.alphas = alphas_from_grads(alpha_nodes, batch, nbrs, k);
  tape.zero_grads();

  res.fields.reserve(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    normalize_alpha(res.alphas[b], eps);
    res.fields.push_back(alpha_to_perturbation(res.alphas[b], nbrs[b]));
  }
  return res;
}

std::vector<PerturbationField> random_perturb_batch(const Batch& batch,
                                                    int dim, double eps,
                                                    std::mt19937_64& rng) {
  if (eps <= 0.0) fail_runtime("random_perturb: eps must be positive");
  return gaussian_fields(batch, dim, eps, rng);
}

std::vector<PerturbationField> iadvt_rand_batch(
    const Batch& batch, const std::vector<SentenceNeighbors>& nbrs, double eps,
    std::mt19937_64& rng) {
  if (eps <= 0.0) fail_runtime("iadvt_rand: eps must be positive");
  std::vector<PerturbationField> fields(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    const auto& sn = nbrs[b];
    AlphaWeights alpha;
    alpha.a.resize(sn.positions());
    for (int t = 0; t < sn.positions(); ++t) {
      const int kt = static_cast<int>(sn.ids[t].size());
      alpha.a[t].assign(kt, 0.0);
      if (kt == 0 || t >= batch.steps || batch.mask[t][b] == 0.0) continue;
      std::uniform_int_distribution<int> pick(0, kt - 1);
      alpha.a[t][pick(rng)] = 1.0;
    }
    normalize_alpha(alpha, eps);
    fields[b] = alpha_to_perturbation(alpha, sn);
  }
  return fields;
}

IadvtBestResult iadvt_best_batch(Tape& tape, const ModelParams& params,
                                 const EmbeddedBatch& eb, const Batch& batch,
                                 const std::vector<SentenceNeighbors>& nbrs,
                                 double eps) {
  auto grads = iadvt_alpha_batch(tape, params, eb, batch, nbrs, eps);
  IadvtBestResult res;
  res.clean_trace = grads.clean_trace;
  res.clean_loss = grads.clean_loss;
  res.fields.reserve(batch.size);
  for (int b = 0; b < batch.size; ++b) {
    const auto& raw = grads.raw[b];
    AlphaWeights alpha;
    alpha.a.resize(raw.a.size());
    for (size_t t = 0; t < raw.a.size(); ++t) {
      alpha.a[t].assign(raw.a[t].size(), 0.0);
      int best = -1;
      double best_mag = 0.0;
      for (size_t kk = 0; kk < raw.a[t].size(); ++kk) {
        const double mag = std::abs(raw.a[t][kk]);
        if (mag > best_mag) {
          best_mag = mag;
          best = static_cast<int>(kk);
        }
      }
      if (best >= 0)
        alpha.a[t][best] = raw.a[t][best] > 0.0 ? 1.0 : -1.0;
    }
    normalize_alpha(alpha, eps);
    res.fields.push_back(alpha_to_perturbation(alpha, nbrs[b]));
  }
  return res;
}

// ---------------------------------------------------------------------------

namespace {

struct SingleContext {
  Tape tape;
  Batch batch;
  EmbeddedBatch eb;
};

std::unique_ptr<SingleContext> single(const ModelParams& params,
                                      const SentenceExample& example) {
  auto ctx = std::make_unique<SingleContext>();
  ctx->batch = make_batch(std::vector<const SentenceExample*>{&example},
                          params.task);
  ctx->tape.adopt(params.embedding.rows);
  ctx->eb = embed_batch(ctx->tape, params, ctx->batch, 0.0, nullptr);
  return ctx;
}

}  // namespace

PerturbationField advt_perturb(const ModelParams& params,
                               const SentenceExample& example, double eps) {
  if (!example.labeled())
    fail_runtime("advt_perturb: example carries no label");
  auto ctx = single(params, example);
  return advt_perturb_batch(ctx->tape, params, ctx->eb, ctx->batch, eps)
      .fields[0];
}

AlphaWeights iadvt_alpha(const ModelParams& params,
                         const SentenceExample& example,
                         const SentenceNeighbors& neighbors, double eps) {
  if (!example.labeled())
    fail_runtime("iadvt_alpha: example carries no label");
  if (neighbors.positions() != example.length())
    fail_runtime("iadvt_alpha: neighbors missing for this sentence");
  auto ctx = single(params, example);
  return iadvt_alpha_batch(ctx->tape, params, ctx->eb, ctx->batch, {neighbors},
                           eps)
      .alphas[0];
}

PerturbationField vat_perturb(const ModelParams& params,
                              const SentenceExample& example, double eps,
                              double xi, std::mt19937_64& rng) {
  auto ctx = single(params, example);
  return vat_perturb_batch(ctx->tape, params, ctx->eb, ctx->batch, eps, xi, rng)
      .fields[0];
}

AlphaWeights ivat_alpha(const ModelParams& params,
                        const SentenceExample& example,
                        const SentenceNeighbors& neighbors, double eps,
                        double xi, std::mt19937_64& rng) {
  if (neighbors.positions() != example.length())
    fail_runtime("ivat_alpha: neighbors missing for this sentence");
  auto ctx = single(params, example);
  return ivat_alpha_batch(ctx->tape, params, ctx->eb, ctx->batch, {neighbors},
                          eps, xi, rng)
      .alphas[0];
}

namespace {

// Labels are irrelevant to the random baselines; strip them so the batch
// builder accepts examples from either task.
Batch unlabeled_batch(const SentenceExample& example) {
  SentenceExample copy = example;
  copy.labels.clear();
  return make_batch(std::vector<const SentenceExample*>{&copy},
                    Task::kClassify);
}

}  // namespace

PerturbationField random_perturb(const SentenceExample& example, int dim,
                                 double eps, std::mt19937_64& rng) {
  Batch batch = unlabeled_batch(example);
  return random_perturb_batch(batch, dim, eps, rng)[0];
}

PerturbationField iadvt_rand(const SentenceExample& example,
                             const SentenceNeighbors& neighbors, double eps,
                             std::mt19937_64& rng) {
  Batch batch = unlabeled_batch(example);
  return iadvt_rand_batch(batch, {neighbors}, eps, rng)[0];
}

PerturbationField iadvt_best(const ModelParams& params,
                             const SentenceExample& example,
                             const SentenceNeighbors& neighbors, double eps) {
  if (!example.labeled())
    fail_runtime("iadvt_best: example carries no label");
  auto ctx = single(params, example);
  return iadvt_best_batch(ctx->tape, params, ctx->eb, ctx->batch, {neighbors},
                          eps)
      .fields[0];
}

}  // namespace iadvtext
