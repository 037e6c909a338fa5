// Command-line front end. Everything goes through the public C API in
// iadvtext.h; the C++ core stays behind the shared library boundary.

#include <cstdio>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "iadvtext.h"

namespace {

int exit_code(iadv_status s) { return static_cast<int>(s); }

int fail_with(iadv_status s) {
  std::cerr << "error: " << iadv_last_error() << '\n';
  return exit_code(s);
}

struct ConfigHandle {
  iadv_config* cfg = iadv_config_new();
  ~ConfigHandle() { iadv_config_free(cfg); }
};

struct DatasetHandle {
  iadv_dataset* data = nullptr;
  ~DatasetHandle() { iadv_dataset_free(data); }
};

struct ModelHandle {
  iadv_model* model = nullptr;
  ~ModelHandle() { iadv_model_free(model); }
};

struct OwnedString {
  char* s = nullptr;
  ~OwnedString() { iadv_string_free(s); }
};

// eval/attack/visualize data, labeled, in the format the --tagging flag
// selects (the checkpoint refuses mismatched formats with a data error).
iadv_status load_labeled(const std::string& path, bool tagging,
                         iadv_dataset** out) {
  return tagging ? iadv_dataset_load_tagging(path.c_str(), out)
                 : iadv_dataset_load_classification(path.c_str(), 1, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"adversarial training in word-embedding space"};
  app.require_subcommand(1);

  // ---- train ----
  auto* train = app.add_subcommand("train", "train a model");
  std::string cfg_path, train_path, dev_path, unlabeled_path, out_ckpt,
      log_path;
  std::vector<std::string> sets;
  train->add_option("--config", cfg_path, "flat key = value config file");
  train->add_option("--train", train_path, "labeled training data")
      ->required();
  train->add_option("--dev", dev_path, "development data")->required();
  train->add_option("--unlabeled", unlabeled_path,
                    "unlabeled sentences (vat/ivat/random)");
  train->add_option("--out", out_ckpt, "output checkpoint path")->required();
  train->add_option("--log", log_path, "write the epoch log to this file");
  train->add_option("--set", sets,
                    "override any config key, e.g. --set epsilon=1.5");
  std::string t_method, t_task, t_preset, t_epsilon, t_lambda, t_seed,
      t_epochs, t_batch, t_k;
  train->add_option("--method", t_method,
                    "baseline|random|advt|iadvt|iadvt-rand|iadvt-best|vat|ivat");
  train->add_option("--task", t_task, "classify|tag");
  train->add_option("--preset", t_preset, "sec|cac|ged");
  train->add_option("--epsilon", t_epsilon, "perturbation norm bound");
  train->add_option("--lambda", t_lambda, "adversarial loss weight");
  train->add_option("--seed", t_seed, "rng seed");
  train->add_option("--epochs", t_epochs, "max epochs");
  train->add_option("--batch-size", t_batch, "minibatch size");
  train->add_option("--k", t_k, "neighbors per position");

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string e_model, e_data;
  bool e_tagging = false;
  eval->add_option("--model", e_model, "checkpoint path")->required();
  eval->add_option("--data", e_data, "labeled data")->required();
  eval->add_flag("--tagging", e_tagging,
                 "data is in token<TAB>label format (GED)");

  // ---- attack ----
  auto* attack = app.add_subcommand(
      "attack", "reconstruct adversarial texts by word substitution");
  std::string a_model, a_data, a_out, a_method;
  int a_nsubs = 1;
  bool a_tagging = false;
  attack->add_option("--model", a_model)->required();
  attack->add_option("--data", a_data)->required();
  attack->add_option("--out", a_out, "JSON report path")->required();
  attack->add_option("--n-subs", a_nsubs, "substitutions per sentence");
  attack->add_option("--method", a_method, "iadvt|ivat override");
  attack->add_flag("--tagging", a_tagging);

  // ---- visualize ----
  auto* viz = app.add_subcommand("visualize",
                                 "sentence-level perturbation heatmap");
  std::string v_model, v_data, v_out, v_method, v_format = "json";
  int v_topm = 5;
  bool v_tagging = false;
  viz->add_option("--model", v_model)->required();
  viz->add_option("--data", v_data)->required();
  viz->add_option("--out", v_out)->required();
  viz->add_option("--method", v_method, "advt|iadvt|vat|ivat override");
  viz->add_option("--top-m", v_topm, "candidates per position");
  viz->add_option("--format", v_format, "json|html");
  viz->add_flag("--tagging", v_tagging);

  // ---- neighbors ----
  auto* nbrs = app.add_subcommand("neighbors",
                                  "nearest neighbors of a word's embedding");
  std::string n_model, n_word;
  int n_k = 10;
  nbrs->add_option("--model", n_model)->required();
  nbrs->add_option("--word", n_word)->required();
  nbrs->add_option("--k", n_k);

  // ---- generate ----
  auto* gen = app.add_subcommand(
      "generate", "write the synthetic planted-keyword sentiment task");
  std::string g_out;
  int g_vocab = 200, g_train = 2000, g_unlabeled = 4000, g_dev = 250,
      g_test = 500;
  unsigned long long g_seed = 1;
  gen->add_option("--out", g_out, "output directory")->required();
  gen->add_option("--vocab-size", g_vocab);
  gen->add_option("--train", g_train);
  gen->add_option("--unlabeled", g_unlabeled);
  gen->add_option("--dev", g_dev);
  gen->add_option("--test", g_test);
  gen->add_option("--seed", g_seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  if (train->parsed()) {
    ConfigHandle cfg;
    if (!cfg_path.empty()) {
      if (auto s = iadv_config_load_file(cfg.cfg, cfg_path.c_str()))
        return fail_with(s);
    }
    auto set = [&](const char* key, const std::string& value) -> iadv_status {
      if (value.empty()) return IADV_OK;
      return iadv_config_set(cfg.cfg, key, value.c_str());
    };
    for (const auto& kv : sets) {
      const size_t eq = kv.find('=');
      if (eq == std::string::npos) {
        std::cerr << "error: --set expects key=value, got " << kv << '\n';
        return 1;
      }
      if (auto s = iadv_config_set(cfg.cfg, kv.substr(0, eq).c_str(),
                                   kv.substr(eq + 1).c_str()))
        return fail_with(s);
    }
    if (auto s = set("preset", t_preset)) return fail_with(s);
    if (auto s = set("task", t_task)) return fail_with(s);
    if (auto s = set("method", t_method)) return fail_with(s);
    if (auto s = set("epsilon", t_epsilon)) return fail_with(s);
    if (auto s = set("lambda", t_lambda)) return fail_with(s);
    if (auto s = set("seed", t_seed)) return fail_with(s);
    if (auto s = set("max_epochs", t_epochs)) return fail_with(s);
    if (auto s = set("batch_size", t_batch)) return fail_with(s);
    if (auto s = set("k_neighbors", t_k)) return fail_with(s);

    const bool tagging = t_task == "tag" || t_preset == "ged";
    DatasetHandle train_data, dev_data, unlabeled_data;
    if (auto s = tagging ? iadv_dataset_load_tagging(train_path.c_str(),
                                                     &train_data.data)
                         : iadv_dataset_load_classification(
                               train_path.c_str(), 1, &train_data.data))
      return fail_with(s);
    if (auto s = tagging ? iadv_dataset_load_tagging(dev_path.c_str(),
                                                     &dev_data.data)
                         : iadv_dataset_load_classification(
                               dev_path.c_str(), 1, &dev_data.data))
      return fail_with(s);
    if (!unlabeled_path.empty()) {
      if (auto s = iadv_dataset_load_classification(unlabeled_path.c_str(), 0,
                                                    &unlabeled_data.data))
        return fail_with(s);
    }

    double dev_metric = 0.0;
    if (auto s = iadv_train(cfg.cfg, train_data.data, dev_data.data,
                            unlabeled_data.data, out_ckpt.c_str(),
                            log_path.empty() ? nullptr : log_path.c_str(),
                            /*log_to_stdout=*/1, &dev_metric))
      return fail_with(s);
    std::printf("dev_metric\t%.6f\n", dev_metric);
    return 0;
  }

  if (eval->parsed()) {
    ModelHandle model;
    if (auto s = iadv_model_load(e_model.c_str(), &model.model))
      return fail_with(s);
    DatasetHandle data;
    if (auto s = load_labeled(e_data, e_tagging, &data.data))
      return fail_with(s);
    OwnedString out;
    if (auto s = iadv_eval(model.model, data.data, &out.s))
      return fail_with(s);
    std::fputs(out.s, stdout);
    return 0;
  }

  if (attack->parsed()) {
    ModelHandle model;
    if (auto s = iadv_model_load(a_model.c_str(), &model.model))
      return fail_with(s);
    DatasetHandle data;
    if (auto s = load_labeled(a_data, a_tagging, &data.data))
      return fail_with(s);
    OwnedString summary;
    if (auto s = iadv_attack(model.model, data.data, a_nsubs,
                             a_method.empty() ? nullptr : a_method.c_str(),
                             a_out.c_str(), &summary.s))
      return fail_with(s);
    std::fputs(summary.s, stdout);
    return 0;
  }

  if (viz->parsed()) {
    ModelHandle model;
    if (auto s = iadv_model_load(v_model.c_str(), &model.model))
      return fail_with(s);
    DatasetHandle data;
    if (auto s = load_labeled(v_data, v_tagging, &data.data))
      return fail_with(s);
    if (auto s = iadv_visualize(model.model, data.data,
                                v_method.empty() ? nullptr : v_method.c_str(),
                                v_topm, v_format.c_str(), v_out.c_str()))
      return fail_with(s);
    std::printf("wrote %s\n", v_out.c_str());
    return 0;
  }

  if (nbrs->parsed()) {
    ModelHandle model;
    if (auto s = iadv_model_load(n_model.c_str(), &model.model))
      return fail_with(s);
    OwnedString out;
    if (auto s = iadv_neighbors(model.model, n_word.c_str(), n_k, &out.s))
      return fail_with(s);
    std::fputs(out.s, stdout);
    return 0;
  }

  if (gen->parsed()) {
    if (auto s = iadv_generate_synthetic(g_vocab, g_train, g_unlabeled, g_dev,
                                         g_test, g_seed, g_out.c_str()))
      return fail_with(s);
    std::printf("wrote %s/{train,unlabeled,dev,test}.txt\n", g_out.c_str());
    return 0;
  }

  return 1;
}
