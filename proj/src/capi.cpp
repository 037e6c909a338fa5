#include "iadvtext.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "checkpoint.hpp"
#include "interpret.hpp"

namespace {

using namespace iadvtext;

thread_local std::string g_last_error;

iadv_status status_of(const Error& e) {
  g_last_error = e.what();
  switch (e.kind()) {
    case ErrorKind::kConfig: return IADV_ERR_CONFIG;
    case ErrorKind::kData: return IADV_ERR_DATA;
    case ErrorKind::kCheckpoint: return IADV_ERR_CHECKPOINT;
    case ErrorKind::kRuntime: return IADV_ERR_RUNTIME;
  }
  return IADV_ERR_RUNTIME;
}

template <typename F>
iadv_status guarded(F&& f) {
  try {
    f();
    return IADV_OK;
  } catch (const Error& e) {
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return IADV_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return IADV_ERR_RUNTIME;
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bool notices_enabled() {
  const char* v = std::getenv("IADVTEXT_LOG");
  return v == nullptr || std::string(v) != "quiet";
}

void notice(const std::string& msg) {
  if (notices_enabled()) std::cerr << "[iadvtext] " << msg << '\n';
}

}  // namespace

struct iadv_config {
  iadvtext::KvList file_kv;
  iadvtext::KvList flag_kv;
};

struct iadv_dataset {
  bool tagging = false;
  bool labeled = false;
  std::vector<iadvtext::ClassificationRecord> cls;
  std::vector<iadvtext::TaggingRecord> tag;

  long size() const {
    return tagging ? static_cast<long>(tag.size())
                   : static_cast<long>(cls.size());
  }
};

struct iadv_model {
  iadvtext::LoadedCheckpoint ck;
};

extern "C" {

const char* iadv_last_error(void) { return g_last_error.c_str(); }

void iadv_string_free(char* s) { std::free(s); }

iadv_config* iadv_config_new(void) { return new iadv_config; }

iadv_status iadv_config_load_file(iadv_config* cfg, const char* path) {
  return guarded([&] { cfg->file_kv = parse_config_file(path); });
}

iadv_status iadv_config_set(iadv_config* cfg, const char* key,
                            const char* value) {
  return guarded([&] {
    cfg->flag_kv.emplace_back(key, value);
    // Validate eagerly so callers learn about bad keys at set time.
    build_config(cfg->file_kv, cfg->flag_kv);
  });
}

void iadv_config_free(iadv_config* cfg) { delete cfg; }

iadv_status iadv_dataset_load_classification(const char* path, int labeled,
                                             iadv_dataset** out) {
  return guarded([&] {
    auto d = std::make_unique<iadv_dataset>();
    LoadStats stats;
    d->cls = load_classification(path, labeled != 0, &stats);
    d->labeled = labeled != 0;
    if (stats.skipped_empty > 0)
      notice(std::string(path) + ": skipped " +
             std::to_string(stats.skipped_empty) + " empty line(s)");
    if (d->cls.empty()) notice(std::string(path) + ": no records loaded");
    *out = d.release();
  });
}

iadv_status iadv_dataset_load_tagging(const char* path, iadv_dataset** out) {
  return guarded([&] {
    auto d = std::make_unique<iadv_dataset>();
    d->tag = load_tagging(path);
    d->tagging = true;
    d->labeled = true;
    *out = d.release();
  });
}

long iadv_dataset_size(const iadv_dataset* data) { return data->size(); }

void iadv_dataset_free(iadv_dataset* data) { delete data; }

iadv_status iadv_generate_synthetic(int vocab_size, int n_train,
                                    int n_unlabeled, int n_dev, int n_test,
                                    unsigned long long seed,
                                    const char* out_dir) {
  return guarded([&] {
    SyntheticConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.n_train = n_train;
    cfg.n_unlabeled = n_unlabeled;
    cfg.n_dev = n_dev;
    cfg.n_test = n_test;
    cfg.seed = seed;
    auto data = generate_synthetic(cfg);
    std::filesystem::create_directories(out_dir);
    const std::filesystem::path dir(out_dir);
    write_classification((dir / "train.txt").string(), data.train, true);
    write_classification((dir / "unlabeled.txt").string(), data.unlabeled,
                         false);
    write_classification((dir / "dev.txt").string(), data.dev, true);
    write_classification((dir / "test.txt").string(), data.test, true);
  });
}

}  // extern "C"

namespace {

struct EncodedData {
  Vocabulary vocab;
  LabelMap labels;
  int n_classes = 0;
  std::vector<SentenceExample> train, unlabeled, dev;
};

std::vector<SentenceExample> encode_dataset(const iadv_dataset& d,
                                            const Vocabulary& vocab,
                                            const LabelMap* labels) {
  std::vector<SentenceExample> out;
  if (d.tagging) {
    for (const auto& r : d.tag) out.push_back(encode_tagging(r, vocab));
  } else {
    for (const auto& r : d.cls)
      out.push_back(encode_classification(r, vocab, labels));
  }
  return out;
}

void check_task_data(const TrainConfig& cfg, const iadv_dataset& d,
                     const char* what) {
  if (cfg.task == Task::kTag && !d.tagging)
    fail(ErrorKind::kData, std::string(what) +
                               ": task is 'tag' but the data is not in "
                               "token<TAB>label format");
  if (cfg.task == Task::kClassify && d.tagging)
    fail(ErrorKind::kData, std::string(what) +
                               ": task is 'classify' but the data is in "
                               "tagging format");
}

EncodedData prepare(const TrainConfig& cfg, const iadv_dataset& train,
                    const iadv_dataset* dev, const iadv_dataset* unlabeled) {
  EncodedData enc;
  check_task_data(cfg, train, "train");
  if (dev) check_task_data(cfg, *dev, "dev");

  std::vector<std::vector<std::string>> corpus;
  if (cfg.task == Task::kClassify) {
    for (const auto& r : train.cls) corpus.push_back(r.tokens);
  } else {
    for (const auto& r : train.tag) corpus.push_back(r.tokens);
  }
  if (unlabeled)
    for (const auto& r : unlabeled->cls) corpus.push_back(r.tokens);
  enc.vocab = build_vocab(corpus, cfg.min_freq, cfg.max_vocab);

  if (cfg.task == Task::kClassify) {
    for (const auto& r : train.cls)
      if (!r.label.empty()) enc.labels.add(r.label);
    if (enc.labels.size() < 2)
      fail(ErrorKind::kData, "training data has fewer than two classes");
  } else {
    enc.labels.add("0");
    enc.labels.add("1");
  }
  enc.n_classes = enc.labels.size();

  enc.train = encode_dataset(train, enc.vocab, &enc.labels);
  if (dev) enc.dev = encode_dataset(*dev, enc.vocab, &enc.labels);
  if (unlabeled) {
    for (const auto& r : unlabeled->cls) {
      SentenceExample e;
      e.ids = enc.vocab.encode(r.tokens);
      enc.unlabeled.push_back(std::move(e));
    }
  }
  return enc;
}

// Splits log output across an optional file and stdout.
class LogSinks {
 public:
  LogSinks(const char* path, bool to_stdout) : to_stdout_(to_stdout) {
    if (path) {
      file_.open(path);
      if (!file_) fail(ErrorKind::kData, std::string("cannot write log: ") + path);
    }
  }
  void line(const std::string& s) {
    if (file_.is_open()) {
      file_ << s << '\n';
      file_.flush();
    }
    if (to_stdout_) std::cout << s << '\n';
  }
  bool active() const { return file_.is_open() || to_stdout_; }

 private:
  std::ofstream file_;
  bool to_stdout_;
};

std::string default_model_id(const TrainConfig& cfg) {
  return std::string("iadvtext-") + task_name(cfg.task) + "-" +
         method_name(cfg.method) + "-seed" + std::to_string(cfg.seed);
}

}  // namespace

extern "C" {

iadv_status iadv_train(const iadv_config* cfg_handle,
                       const iadv_dataset* train, const iadv_dataset* dev,
                       const iadv_dataset* unlabeled,
                       const char* out_checkpoint, const char* log_path,
                       int log_to_stdout, double* out_dev_metric) {
  return guarded([&] {
    TrainConfig cfg = build_config(cfg_handle->file_kv, cfg_handle->flag_kv);
    if (train == nullptr || train->size() == 0)
      fail(ErrorKind::kData, "training data is empty");
    if ((method_uses_kl(cfg.method) || cfg.method == Method::kRandom) &&
        (unlabeled == nullptr || unlabeled->size() == 0))
      notice(std::string(method_name(cfg.method)) +
             ": no unlabeled data; the consistency term falls back to "
             "labeled examples");

    EncodedData enc = prepare(cfg, *train, dev, unlabeled);
    if (!cfg.pretrained_vectors.empty())
      notice("initializing embeddings from " + cfg.pretrained_vectors);

    Trainer trainer(cfg, enc.vocab, enc.n_classes, std::move(enc.train),
                    std::move(enc.unlabeled), std::move(enc.dev));
    if (!cfg.pretrained_vectors.empty()) {
      auto stats = load_pretrained_vectors(cfg.pretrained_vectors,
                                           trainer.vocab(),
                                           trainer.params().embedding);
      notice("pretrained vectors: " + std::to_string(stats.matched) +
             " matched, " + std::to_string(stats.unmatched) + " unmatched");
    }

    LogSinks sinks(log_path, log_to_stdout != 0);
    std::ostringstream buffer;
    TrainOutcome outcome;
    if (sinks.active()) {
      // Stream epoch lines as they are produced.
      struct LineStream : std::streambuf {
        LogSinks* sinks;
        std::string pending;
        int overflow(int ch) override {
          if (ch == '\n') {
            sinks->line(pending);
            pending.clear();
          } else {
            pending.push_back(static_cast<char>(ch));
          }
          return ch;
        }
      } buf;
      buf.sinks = &sinks;
      std::ostream os(&buf);
      outcome = trainer.run(&os);
    } else {
      outcome = trainer.run(nullptr);
    }

    if (out_checkpoint)
      save_checkpoint(out_checkpoint, default_model_id(cfg), cfg,
                      trainer.vocab(), enc.labels, outcome.best);
    if (out_dev_metric) *out_dev_metric = outcome.best_metric;
  });
}

iadv_status iadv_model_load(const char* path, iadv_model** out) {
  return guarded([&] {
    auto m = std::make_unique<iadv_model>();
    m->ck = load_checkpoint(path);
    *out = m.release();
  });
}

void iadv_model_free(iadv_model* model) { delete model; }

iadv_status iadv_eval(const iadv_model* model, const iadv_dataset* data,
                      char** out_tsv) {
  return guarded([&] {
    const auto& ck = model->ck;
    check_task_data(ck.config, *data, "eval");
    auto examples = encode_dataset(*data, ck.vocab, &ck.labels);
    auto pred = predict(ck.params, examples);
    if (pred.gold.empty())
      fail(ErrorKind::kData, "eval requires labeled data");
    std::ostringstream out;
    char buf[64];
    if (ck.config.task == Task::kClassify) {
      std::snprintf(buf, sizeof buf, "%.6f", error_rate(pred.labels, pred.gold));
      out << "error_rate\t" << buf << '\n';
    } else {
      const F05 f = f_half_score(pred.labels, pred.gold);
      std::snprintf(buf, sizeof buf, "%.6f", f.precision);
      out << "precision\t" << buf << '\n';
      std::snprintf(buf, sizeof buf, "%.6f", f.recall);
      out << "recall\t" << buf << '\n';
      std::snprintf(buf, sizeof buf, "%.6f", f.f_half);
      out << "f0.5\t" << buf << '\n';
    }
    *out_tsv = dup_string(out.str());
  });
}

}  // extern "C"

namespace {

// Attack and visualization share the per-sentence alpha/field computation.
struct SentenceView {
  const std::vector<std::string>* tokens;
  SentenceExample example;
};

std::vector<SentenceView> sentence_views(const iadv_dataset& data,
                                         const LoadedCheckpoint& ck) {
  std::vector<SentenceView> views;
  if (data.tagging) {
    for (const auto& r : data.tag)
      views.push_back({&r.tokens, encode_tagging(r, ck.vocab)});
  } else {
    for (const auto& r : data.cls)
      views.push_back({&r.tokens, encode_classification(r, ck.vocab, &ck.labels)});
  }
  return views;
}

Method effective_alpha_method(const LoadedCheckpoint& ck,
                              const char* override_name, bool for_attack) {
  Method m = ck.config.method;
  if (override_name) m = method_from_name(override_name);
  switch (m) {
    case Method::kIadvt:
    case Method::kIadvtRand:
    case Method::kIadvtBest:
      return Method::kIadvt;
    case Method::kIvat:
      return Method::kIvat;
    case Method::kAdvt:
    case Method::kVat:
      if (!for_attack) return m;
      [[fallthrough]];
    default:
      fail(ErrorKind::kConfig,
           std::string(for_attack ? "attack" : "visualization") +
               " needs an interpretable scheme; the model was trained with '" +
               method_name(ck.config.method) +
               "' (pass an explicit method: iadvt or ivat)");
  }
  return Method::kIadvt;
}

}  // namespace

extern "C" {

iadv_status iadv_attack(const iadv_model* model, const iadv_dataset* data,
                        int n_substitutions, const char* method_override,
                        const char* out_json, char** out_summary_tsv) {
  return guarded([&] {
    const auto& ck = model->ck;
    check_task_data(ck.config, *data, "attack");
    if (!data->labeled || data->size() == 0)
      fail(ErrorKind::kData, "attack requires labeled, non-empty data");
    const Method alpha_method = effective_alpha_method(ck, method_override,
                                                       /*for_attack=*/true);
    const TrainConfig& cfg = ck.config;
    std::mt19937_64 rng(cfg.seed);

    HeatmapReport report;
    report.model_id = ck.model_id;
    report.method = method_name(alpha_method);
    report.epsilon = cfg.epsilon;

    long flips = 0;
    double delta_sum = 0.0;
    auto views = sentence_views(*data, ck);
    for (auto& view : views) {
      auto nbrs = sentence_neighbors(ck.params.embedding, ck.vocab,
                                     view.example.ids, cfg.k_neighbors,
                                     cfg.cosine_neighbors);
      AlphaWeights alpha =
          alpha_method == Method::kIadvt
              ? iadvt_alpha(ck.params, view.example, nbrs, cfg.epsilon)
              : ivat_alpha(ck.params, view.example, nbrs, cfg.epsilon, cfg.xi,
                           rng);
      auto outcome = reconstruct_adversarial_text(
          ck.params, ck.vocab, view.example, *view.tokens, alpha, nbrs,
          n_substitutions, ck.labels.names(),
          cfg.attack_rank_by_field_norm);
      if (outcome.flipped) ++flips;
      delta_sum += outcome.loss_after - outcome.loss_before;

      HeatmapSentence s = heatmap_from_alpha(*view.tokens, alpha, nbrs,
                                             ck.vocab, /*top_m=*/1);
      s.attack = std::move(outcome);
      report.sentences.push_back(std::move(s));
    }

    if (out_json) export_report(report, "json", out_json);
    if (out_summary_tsv) {
      const double n = static_cast<double>(views.size());
      std::ostringstream out;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", flips / n);
      out << "flip_rate\t" << buf << '\n';
      std::snprintf(buf, sizeof buf, "%.6f", delta_sum / n);
      out << "mean_loss_delta\t" << buf << '\n';
      out << "n\t" << views.size() << '\n';
      *out_summary_tsv = dup_string(out.str());
    }
  });
}

iadv_status iadv_visualize(const iadv_model* model, const iadv_dataset* data,
                           const char* method_override, int top_m,
                           const char* format, const char* out_path) {
  return guarded([&] {
    const auto& ck = model->ck;
    check_task_data(ck.config, *data, "visualize");
    const Method m = effective_alpha_method(ck, method_override,
                                            /*for_attack=*/false);
    const TrainConfig& cfg = ck.config;
    std::mt19937_64 rng(cfg.seed);

    HeatmapReport report;
    report.model_id = ck.model_id;
    report.method = method_name(m);
    report.epsilon = cfg.epsilon;

    auto views = sentence_views(*data, ck);
    for (auto& view : views) {
      if (m == Method::kIadvt || m == Method::kIvat) {
        auto nbrs = sentence_neighbors(ck.params.embedding, ck.vocab,
                                       view.example.ids, cfg.k_neighbors,
                                       cfg.cosine_neighbors);
        AlphaWeights alpha =
            m == Method::kIadvt
                ? iadvt_alpha(ck.params, view.example, nbrs, cfg.epsilon)
                : ivat_alpha(ck.params, view.example, nbrs, cfg.epsilon,
                             cfg.xi, rng);
        report.sentences.push_back(heatmap_from_alpha(
            *view.tokens, alpha, nbrs, ck.vocab, top_m));
      } else {
        PerturbationField field =
            m == Method::kAdvt
                ? advt_perturb(ck.params, view.example, cfg.epsilon)
                : vat_perturb(ck.params, view.example, cfg.epsilon, cfg.xi,
                              rng);
        report.sentences.push_back(heatmap_from_field(
            *view.tokens, view.example.ids, field, ck.params.embedding,
            ck.vocab, top_m));
      }
    }
    export_report(report, format, out_path);
  });
}

iadv_status iadv_neighbors(const iadv_model* model, const char* word, int k,
                           char** out_tsv) {
  return guarded([&] {
    const auto& ck = model->ck;
    int id = ck.vocab.id(word);
    if (id == Vocabulary::kUnk && std::string(word) != Vocabulary::kUnkToken)
      notice(std::string("'") + word + "' is not in the vocabulary; using " +
             Vocabulary::kUnkToken);
    const std::unordered_set<int> exclude{Vocabulary::kPad, Vocabulary::kUnk,
                                          Vocabulary::kEos};
    bool shortfall = false;
    auto ids = nearest_neighbors(ck.params.embedding, id, k, exclude,
                                 &shortfall, ck.config.cosine_neighbors);
    if (shortfall)
      notice("only " + std::to_string(ids.size()) + " eligible neighbors");
    std::ostringstream out;
    const double* w = ck.params.embedding.row(id);
    for (int nid : ids) {
      const double* x = ck.params.embedding.row(nid);
      double s = 0.0;
      for (int i = 0; i < ck.params.embedding.dim(); ++i)
        s += (x[i] - w[i]) * (x[i] - w[i]);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", std::sqrt(s));
      out << ck.vocab.token(nid) << '\t' << buf << '\n';
    }
    *out_tsv = dup_string(out.str());
  });
}

}  // extern "C"
