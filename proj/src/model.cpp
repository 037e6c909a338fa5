#include "model.hpp"

#include <cmath>

namespace iadvtext {

const char* task_name(Task t) {
  return t == Task::kClassify ? "classify" : "tag";
}

Task task_from_name(const std::string& name) {
  if (name == "classify") return Task::kClassify;
  if (name == "tag") return Task::kTag;
  fail(ErrorKind::kConfig, "unknown task: " + name + " (classify|tag)");
  return Task::kClassify;
}

namespace {

TensorPtr param(int rows, int cols, std::vector<double> values) {
  auto t = std::make_shared<Tensor>();
  t->rows = rows;
  t->cols = cols;
  t->values = std::move(values);
  t->requires_grad = true;
  return t;
}

TensorPtr uniform_param(int rows, int cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.1, 0.1);
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = u(rng);
  return param(rows, cols, std::move(v));
}

LstmParams init_lstm(int in_dim, int hidden, std::mt19937_64& rng) {
  LstmParams p;
  p.wx = uniform_param(in_dim, 4 * hidden, rng);
  p.wh = uniform_param(hidden, 4 * hidden, rng);
  std::vector<double> bias(static_cast<size_t>(4) * hidden, 0.0);
  for (int i = hidden; i < 2 * hidden; ++i) bias[i] = 1.0;  // forget gate
  p.b = param(1, 4 * hidden, std::move(bias));
  return p;
}

TensorPtr clone_tensor(const TensorPtr& t) {
  auto c = std::make_shared<Tensor>();
  c->rows = t->rows;
  c->cols = t->cols;
  c->values = t->values;
  c->requires_grad = t->requires_grad;
  return c;
}

}  // namespace

std::vector<std::pair<std::string, TensorPtr>> ModelParams::named_parameters()
    const {
  std::vector<std::pair<std::string, TensorPtr>> out;
  out.emplace_back("embedding", embedding.rows);
  out.emplace_back("lstm_fwd.wx", fwd.wx);
  out.emplace_back("lstm_fwd.wh", fwd.wh);
  out.emplace_back("lstm_fwd.b", fwd.b);
  if (task == Task::kTag) {
    out.emplace_back("lstm_bwd.wx", bwd.wx);
    out.emplace_back("lstm_bwd.wh", bwd.wh);
    out.emplace_back("lstm_bwd.b", bwd.b);
  }
  out.emplace_back("ffnn.w1", head.w1);
  out.emplace_back("ffnn.b1", head.b1);
  out.emplace_back("ffnn.w2", head.w2);
  out.emplace_back("ffnn.b2", head.b2);
  return out;
}

ModelParams ModelParams::clone() const {
  ModelParams c = *this;
  c.embedding.rows = clone_tensor(embedding.rows);
  c.fwd = {clone_tensor(fwd.wx), clone_tensor(fwd.wh), clone_tensor(fwd.b)};
  if (task == Task::kTag)
    c.bwd = {clone_tensor(bwd.wx), clone_tensor(bwd.wh), clone_tensor(bwd.b)};
  c.head = {clone_tensor(head.w1), clone_tensor(head.b1),
            clone_tensor(head.w2), clone_tensor(head.b2)};
  return c;
}

ModelParams init_model(Task task, int vocab_size, int emb_dim, int hidden_dim,
                       int ffnn_dim, int n_classes, std::mt19937_64& rng) {
  ModelParams p;
  p.task = task;
  p.emb_dim = emb_dim;
  p.hidden_dim = hidden_dim;
  p.ffnn_dim = ffnn_dim;
  p.n_classes = n_classes;
  p.embedding = init_embeddings(vocab_size, emb_dim, rng);
  p.fwd = init_lstm(emb_dim, hidden_dim, rng);
  const int head_in = task == Task::kTag ? 2 * hidden_dim : hidden_dim;
  if (task == Task::kTag) p.bwd = init_lstm(emb_dim, hidden_dim, rng);
  p.head.w1 = uniform_param(head_in, ffnn_dim, rng);
  p.head.b1 = param(1, ffnn_dim, std::vector<double>(ffnn_dim, 0.0));
  p.head.w2 = uniform_param(ffnn_dim, n_classes, rng);
  p.head.b2 = param(1, n_classes, std::vector<double>(n_classes, 0.0));
  return p;
}

std::vector<double> ForwardTrace::probs(int step) const {
  const auto& lp = logp.at(step);
  std::vector<double> out(lp->values.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::exp(lp->values[i]);
  return out;
}

std::pair<TensorPtr, TensorPtr> lstm_step(Tape& tape, const LstmParams& p,
                                          const TensorPtr& w,
                                          const TensorPtr& h_prev,
                                          const TensorPtr& c_prev) {
  const int hidden = p.wh->rows;
  auto z = tape.add(tape.add(tape.matmul(w, p.wx), tape.matmul(h_prev, p.wh)),
                    p.b);
  auto gate_i = tape.sigmoid(tape.slice_cols(z, 0, hidden));
  auto gate_f = tape.sigmoid(tape.slice_cols(z, hidden, 2 * hidden));
  auto cand = tape.tanh(tape.slice_cols(z, 2 * hidden, 3 * hidden));
  auto gate_o = tape.sigmoid(tape.slice_cols(z, 3 * hidden, 4 * hidden));
  auto c = tape.add(tape.mul(gate_f, c_prev), tape.mul(gate_i, cand));
  auto h = tape.mul(gate_o, tape.tanh(c));
  return {h, c};
}

namespace {

// State freezing keeps h and c at their last real-token values across
// padding: h_t = m * h_new + (1 - m) * h_prev.
struct StepMasks {
  TensorPtr keep;  // [B,H] rows of 1 where real
  TensorPtr hold;  // 1 - keep
};

StepMasks step_masks(Tape& tape, const std::vector<double>& mask, int hidden) {
  const int b = static_cast<int>(mask.size());
  std::vector<double> keep(static_cast<size_t>(b) * hidden);
  std::vector<double> hold(static_cast<size_t>(b) * hidden);
  for (int r = 0; r < b; ++r)
    for (int c = 0; c < hidden; ++c) {
      keep[static_cast<size_t>(r) * hidden + c] = mask[r];
      hold[static_cast<size_t>(r) * hidden + c] = 1.0 - mask[r];
    }
  return {tape.constant(b, hidden, std::move(keep)),
          tape.constant(b, hidden, std::move(hold))};
}

bool all_ones(const std::vector<double>& mask) {
  for (double m : mask)
    if (m != 1.0) return false;
  return true;
}

TensorPtr ffnn_logits(Tape& tape, const FfnnParams& head, const TensorPtr& h) {
  auto hid = tape.relu(tape.add(tape.matmul(h, head.w1), head.b1));
  return tape.add(tape.matmul(hid, head.w2), head.b2);
}

void check_batch(const std::vector<TensorPtr>& embedded,
                 const std::vector<std::vector<double>>& mask) {
  if (embedded.empty())
    fail_runtime("model forward: empty sequence");
  if (mask.size() != embedded.size())
    fail_runtime("model forward: mask length " + std::to_string(mask.size()) +
                 " != sequence length " + std::to_string(embedded.size()));
}

}  // namespace

ForwardTrace classify(Tape& tape, const ModelParams& params,
                      const std::vector<TensorPtr>& embedded,
                      const std::vector<std::vector<double>>& mask) {
  check_batch(embedded, mask);
  const int b = embedded[0]->rows;
  const int hidden = params.hidden_dim;

  ForwardTrace trace;
  trace.task = Task::kClassify;
  trace.batch = b;
  trace.steps = static_cast<int>(embedded.size());

  auto h = tape.zeros(b, hidden);
  auto c = tape.zeros(b, hidden);
  for (size_t t = 0; t < embedded.size(); ++t) {
    auto [hn, cn] = lstm_step(tape, params.fwd, embedded[t], h, c);
    if (all_ones(mask[t])) {
      h = hn;
      c = cn;
    } else {
      auto m = step_masks(tape, mask[t], hidden);
      h = tape.add(tape.mul(hn, m.keep), tape.mul(h, m.hold));
      c = tape.add(tape.mul(cn, m.keep), tape.mul(c, m.hold));
    }
    trace.hidden.push_back(h);
  }
  auto logits = ffnn_logits(tape, params.head, h);
  trace.logits.push_back(logits);
  trace.logp.push_back(tape.log_softmax(logits));
  return trace;
}

ForwardTrace tag(Tape& tape, const ModelParams& params,
                 const std::vector<TensorPtr>& embedded,
                 const std::vector<std::vector<double>>& mask) {
  check_batch(embedded, mask);
  const int b = embedded[0]->rows;
  const int hidden = params.hidden_dim;
  const int steps = static_cast<int>(embedded.size());

  ForwardTrace trace;
  trace.task = Task::kTag;
  trace.batch = b;
  trace.steps = steps;

  std::vector<TensorPtr> hf(steps), hb(steps);
  auto h = tape.zeros(b, hidden);
  auto c = tape.zeros(b, hidden);
  for (int t = 0; t < steps; ++t) {
    auto [hn, cn] = lstm_step(tape, params.fwd, embedded[t], h, c);
    if (all_ones(mask[t])) {
      h = hn;
      c = cn;
    } else {
      auto m = step_masks(tape, mask[t], hidden);
      h = tape.add(tape.mul(hn, m.keep), tape.mul(h, m.hold));
      c = tape.add(tape.mul(cn, m.keep), tape.mul(c, m.hold));
    }
    hf[t] = h;
  }
  h = tape.zeros(b, hidden);
  c = tape.zeros(b, hidden);
  for (int t = steps - 1; t >= 0; --t) {
    auto [hn, cn] = lstm_step(tape, params.bwd, embedded[t], h, c);
    if (all_ones(mask[t])) {
      h = hn;
      c = cn;
    } else {
      auto m = step_masks(tape, mask[t], hidden);
      h = tape.add(tape.mul(hn, m.keep), tape.mul(h, m.hold));
      c = tape.add(tape.mul(cn, m.keep), tape.mul(c, m.hold));
    }
    hb[t] = h;
  }
  for (int t = 0; t < steps; ++t) {
    auto ht = tape.concat(hf[t], hb[t]);
    trace.hidden.push_back(ht);
    auto logits = ffnn_logits(tape, params.head, ht);
    trace.logits.push_back(logits);
    trace.logp.push_back(tape.log_softmax(logits));
  }
  return trace;
}

ForwardTrace model_forward(Tape& tape, const ModelParams& params,
                           const std::vector<TensorPtr>& embedded,
                           const std::vector<std::vector<double>>& mask) {
  return params.task == Task::kClassify ? classify(tape, params, embedded, mask)
                                        : tag(tape, params, embedded, mask);
}

TensorPtr nll_loss(Tape& tape, const ForwardTrace& trace,
                   const std::vector<std::vector<int>>& labels,
                   const std::vector<std::vector<double>>& mask) {
  if (trace.task == Task::kClassify) {
    if (labels.size() != 1)
      fail_runtime("nll_loss: classification expects one label row");
    return tape.nll_select(trace.logp[0], labels[0],
                           std::vector<double>(trace.batch, 1.0));
  }
  if (static_cast<int>(labels.size()) != trace.steps ||
      static_cast<int>(mask.size()) != trace.steps)
    fail_runtime("nll_loss: labels/mask must cover every step");
  TensorPtr total;
  for (int t = 0; t < trace.steps; ++t) {
    auto term = tape.nll_select(trace.logp[t], labels[t], mask[t]);
    total = total ? tape.add(total, term) : term;
  }
  return total;
}

TensorPtr kl_loss(Tape& tape, const ForwardTrace& clean,
                  const ForwardTrace& perturbed,
                  const std::vector<std::vector<double>>& mask) {
  if (clean.task != perturbed.task || clean.steps != perturbed.steps ||
      clean.batch != perturbed.batch)
    fail_runtime("kl_loss: traces disagree on shape (" +
                 std::to_string(clean.steps) + " vs " +
                 std::to_string(perturbed.steps) + " steps)");
  const int terms = clean.task == Task::kClassify ? 1 : clean.steps;
  TensorPtr total;
  for (int t = 0; t < terms; ++t) {
    const auto& lp = clean.logp[t];
    std::vector<double> p(lp->values.size());
    for (size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lp->values[i]);
    const std::vector<double> m = clean.task == Task::kClassify
                                      ? std::vector<double>(clean.batch, 1.0)
                                      : mask[t];
    auto term = tape.kl_const(p, lp->values, perturbed.logp[t], m);
    total = total ? tape.add(total, term) : term;
  }
  return total;
}

double kl_divergence(const std::vector<double>& p,
                     const std::vector<double>& logp,
                     const std::vector<double>& logq) {
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    if (p[i] != 0.0) s += p[i] * (logp[i] - logq[i]);
  return s;
}

}  // namespace iadvtext
