#include "pipeline.hpp"

#include <algorithm>

namespace iadvtext {

Batch make_batch(const std::vector<const SentenceExample*>& examples,
                 Task task) {
  if (examples.empty()) fail_runtime("make_batch: empty batch");
  Batch b;
  b.size = static_cast<int>(examples.size());
  b.labeled = true;
  for (const auto* e : examples) {
    if (e->length() == 0) fail_runtime("make_batch: empty sentence");
    b.steps = std::max(b.steps, e->length());
    b.lengths.push_back(e->length());
    if (!e->labeled()) b.labeled = false;
  }
  b.ids.assign(b.steps, std::vector<int>(b.size, Vocabulary::kPad));
  b.mask.assign(b.steps, std::vector<double>(b.size, 0.0));
  for (int i = 0; i < b.size; ++i) {
    const auto& e = *examples[i];
    for (int t = 0; t < e.length(); ++t) {
      b.ids[t][i] = e.ids[t];
      b.mask[t][i] = e.mask_at(t);
    }
  }
  if (b.labeled) {
    if (task == Task::kClassify) {
      b.labels.assign(1, std::vector<int>(b.size, 0));
      for (int i = 0; i < b.size; ++i) {
        if (examples[i]->labels.size() != 1)
          fail_runtime("make_batch: classification example needs one label");
        b.labels[0][i] = examples[i]->labels[0];
      }
    } else {
      b.labels.assign(b.steps, std::vector<int>(b.size, 0));
      for (int i = 0; i < b.size; ++i) {
        const auto& e = *examples[i];
        if (static_cast<int>(e.labels.size()) != e.length())
          fail_runtime("make_batch: tagging labels must cover every token");
        for (int t = 0; t < e.length(); ++t) b.labels[t][i] = e.labels[t];
      }
    }
  }
  return b;
}

Batch make_batch(const std::vector<SentenceExample>& examples, Task task) {
  std::vector<const SentenceExample*> ptrs;
  ptrs.reserve(examples.size());
  for (const auto& e : examples) ptrs.push_back(&e);
  return make_batch(ptrs, task);
}

EmbeddedBatch embed_batch(Tape& tape, const ModelParams& params,
                          const Batch& batch, double dropout_rate,
                          std::mt19937_64* rng, PerturbStage stage) {
  EmbeddedBatch eb;
  eb.stage = stage;
  eb.train_mode = rng != nullptr;
  eb.dropout_rate = dropout_rate;
  eb.targets.reserve(batch.steps);
  const bool drop = eb.train_mode && dropout_rate > 0.0;
  for (int t = 0; t < batch.steps; ++t) {
    auto e = tape.gather_rows(params.embedding.rows, batch.ids[t]);
    if (drop && stage == PerturbStage::kAfterDropout)
      e = tape.dropout(e, dropout_rate, *rng, true);
    eb.targets.push_back(e);
  }
  if (drop && stage == PerturbStage::kBeforeDropout) {
    // Masks are sampled once so the clean and perturbed forwards share them.
    const double keep = 1.0 - dropout_rate;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int t = 0; t < batch.steps; ++t) {
      std::vector<double> m(eb.targets[t]->values.size());
      for (auto& v : m) v = u(*rng) < dropout_rate ? 0.0 : 1.0 / keep;
      eb.drop_masks.push_back(std::move(m));
    }
  }
  return eb;
}

ForwardTrace forward_with_field(Tape& tape, const ModelParams& params,
                                const EmbeddedBatch& eb, const Batch& batch,
                                const std::vector<TensorPtr>& addends,
                                std::vector<TensorPtr>* used_inputs) {
  if (!addends.empty() &&
      addends.size() != static_cast<size_t>(batch.steps))
    fail_runtime("forward_with_field: addend count does not match steps");
  std::vector<TensorPtr> inputs;
  inputs.reserve(batch.steps);
  for (int t = 0; t < batch.steps; ++t) {
    TensorPtr in = eb.targets[t];
    if (!addends.empty() && addends[t]) in = tape.add(in, addends[t]);
    if (!eb.drop_masks.empty())
      in = tape.mul(in, tape.constant(in->rows, in->cols, eb.drop_masks[t]));
    inputs.push_back(in);
  }
  if (used_inputs) *used_inputs = inputs;
  return model_forward(tape, params, inputs, batch.mask);
}

namespace {

int argmax_row(const std::vector<double>& v, int row, int cols) {
  int best = 0;
  const size_t off = static_cast<size_t>(row) * cols;
  for (int c = 1; c < cols; ++c)
    if (v[off + c] > v[off + best]) best = c;
  return best;
}

}  // namespace

Predictions predict(const ModelParams& params,
                    const std::vector<SentenceExample>& examples,
                    int eval_batch) {
  Predictions out;
  for (size_t begin = 0; begin < examples.size();
       begin += static_cast<size_t>(eval_batch)) {
    const size_t end =
        std::min(examples.size(), begin + static_cast<size_t>(eval_batch));
    std::vector<const SentenceExample*> chunk;
    for (size_t i = begin; i < end; ++i) chunk.push_back(&examples[i]);
    Batch batch = make_batch(chunk, params.task);

    Tape tape;
    tape.adopt(params.embedding.rows);
    auto eb = embed_batch(tape, params, batch, 0.0, nullptr);
    auto trace = forward_with_field(tape, params, eb, batch);

    if (params.task == Task::kClassify) {
      const auto& logits = trace.logits[0]->values;
      for (int b = 0; b < batch.size; ++b) {
        out.labels.push_back(argmax_row(logits, b, params.n_classes));
        if (batch.labeled) out.gold.push_back(batch.labels[0][b]);
      }
    } else {
      for (int b = 0; b < batch.size; ++b) {
        for (int t = 0; t < batch.lengths[b]; ++t) {
          if (batch.mask[t][b] == 0.0) continue;
          out.labels.push_back(
              argmax_row(trace.logits[t]->values, b, params.n_classes));
          if (batch.labeled) out.gold.push_back(batch.labels[t][b]);
        }
      }
    }
  }
  return out;
}

double mean_nll(const ModelParams& params,
                const std::vector<SentenceExample>& examples, int eval_batch) {
  double total = 0.0;
  for (size_t begin = 0; begin < examples.size();
       begin += static_cast<size_t>(eval_batch)) {
    const size_t end =
        std::min(examples.size(), begin + static_cast<size_t>(eval_batch));
    std::vector<const SentenceExample*> chunk;
    for (size_t i = begin; i < end; ++i) chunk.push_back(&examples[i]);
    Batch batch = make_batch(chunk, params.task);
    Tape tape;
    tape.adopt(params.embedding.rows);
    auto eb = embed_batch(tape, params, batch, 0.0, nullptr);
    auto trace = forward_with_field(tape, params, eb, batch);
    total += nll_loss(tape, trace, batch.labels, batch.mask)->scalar();
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

}  // namespace iadvtext
