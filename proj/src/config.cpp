#include "config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

namespace iadvtext {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const double x = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, "bad numeric value for " + key + ": " + value);
  }
  return 0.0;
}

long parse_long(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    const long x = std::stol(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    fail(ErrorKind::kConfig, "bad integer value for " + key + ": " + value);
  }
  return 0;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  fail(ErrorKind::kConfig, "bad boolean value for " + key + ": " + value);
  return false;
}

std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void apply_preset(TrainConfig& cfg, const std::string& preset) {
  if (preset == "sec") {
    cfg.task = Task::kClassify;
    cfg.emb_dim = 256;
    cfg.hidden_dim = 1024;
    cfg.ffnn_dim = 30;
  } else if (preset == "cac") {
    cfg.task = Task::kClassify;
    cfg.emb_dim = 256;
    cfg.hidden_dim = 1024;
    cfg.ffnn_dim = 128;
  } else if (preset == "ged") {
    cfg.task = Task::kTag;
    cfg.emb_dim = 300;
    cfg.hidden_dim = 200;
    cfg.ffnn_dim = 50;
  } else {
    fail(ErrorKind::kConfig, "unknown preset: " + preset + " (sec|cac|ged)");
  }
}

struct Pending {
  bool has_epsilon = false;
  bool has_xi = false;
};

void apply_key(TrainConfig& cfg, Pending& pending, const std::string& key,
               const std::string& value) {
  if (key == "task") cfg.task = task_from_name(value);
  else if (key == "method") cfg.method = method_from_name(value);
  else if (key == "epsilon") { cfg.epsilon = parse_double(key, value); pending.has_epsilon = true; }
  else if (key == "lambda") cfg.lambda = parse_double(key, value);
  else if (key == "k_neighbors") cfg.k_neighbors = static_cast<int>(parse_long(key, value));
  else if (key == "xi") { cfg.xi = parse_double(key, value); pending.has_xi = true; }
  else if (key == "neighbor_refresh_interval") cfg.neighbor_refresh_interval = static_cast<int>(parse_long(key, value));
  else if (key == "emb_dim") cfg.emb_dim = static_cast<int>(parse_long(key, value));
  else if (key == "hidden_dim") cfg.hidden_dim = static_cast<int>(parse_long(key, value));
  else if (key == "ffnn_dim") cfg.ffnn_dim = static_cast<int>(parse_long(key, value));
  else if (key == "batch_size") cfg.batch_size = static_cast<int>(parse_long(key, value));
  else if (key == "learning_rate") cfg.learning_rate = parse_double(key, value);
  else if (key == "decay_rate") cfg.decay_rate = parse_double(key, value);
  else if (key == "adam_beta1") cfg.adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") cfg.adam_beta2 = parse_double(key, value);
  else if (key == "adam_eps") cfg.adam_eps = parse_double(key, value);
  else if (key == "dropout") cfg.dropout = parse_double(key, value);
  else if (key == "grad_clip") cfg.grad_clip = parse_double(key, value);
  else if (key == "max_epochs") cfg.max_epochs = static_cast<int>(parse_long(key, value));
  else if (key == "patience") cfg.patience = static_cast<int>(parse_long(key, value));
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_long(key, value));
  else if (key == "min_freq") cfg.min_freq = static_cast<int>(parse_long(key, value));
  else if (key == "max_vocab") cfg.max_vocab = static_cast<int>(parse_long(key, value));
  else if (key == "pretrained_vectors") cfg.pretrained_vectors = value;
  else if (key == "normalize_embeddings") cfg.normalize_embeddings = parse_bool(key, value);
  else if (key == "cosine_neighbors") cfg.cosine_neighbors = parse_bool(key, value);
  else if (key == "perturb_before_dropout") cfg.perturb_before_dropout = parse_bool(key, value);
  else if (key == "attack_rank_by_field_norm") cfg.attack_rank_by_field_norm = parse_bool(key, value);
  else fail(ErrorKind::kConfig, "unknown config key: " + key);
}

}  // namespace

KvList parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kConfig, "cannot open config file: " + path);
  KvList kv;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::kConfig, path + ":" + std::to_string(line_no) +
                                   ": expected key = value");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

TrainConfig build_config(const KvList& file_kv, const KvList& flag_kv) {
  TrainConfig cfg;
  Pending pending;

  // The preset resolves first so explicit keys at any layer override it.
  std::string preset;
  for (const auto& [k, v] : file_kv)
    if (k == "preset") preset = v;
  for (const auto& [k, v] : flag_kv)
    if (k == "preset") preset = v;
  if (!preset.empty()) apply_preset(cfg, preset);

  for (const auto& [k, v] : file_kv)
    if (k != "preset") apply_key(cfg, pending, k, v);
  for (const auto& [k, v] : flag_kv)
    if (k != "preset") apply_key(cfg, pending, k, v);

  if (!pending.has_epsilon) {
    switch (cfg.method) {
      case Method::kBaseline: cfg.epsilon = 0.0; break;
      case Method::kAdvt:
      case Method::kVat:
      case Method::kRandom: cfg.epsilon = 5.0; break;
      case Method::kIadvt:
      case Method::kIadvtRand:
      case Method::kIadvtBest:
      case Method::kIvat: cfg.epsilon = 15.0; break;
    }
  }
  if (!pending.has_xi) cfg.xi = 0.1 * cfg.epsilon;
  cfg.validate();
  return cfg;
}

KvList config_to_kv(const TrainConfig& cfg) {
  KvList kv;
  kv.emplace_back("task", task_name(cfg.task));
  kv.emplace_back("method", method_name(cfg.method));
  kv.emplace_back("epsilon", fmt_double(cfg.epsilon));
  kv.emplace_back("lambda", fmt_double(cfg.lambda));
  kv.emplace_back("k_neighbors", std::to_string(cfg.k_neighbors));
  kv.emplace_back("xi", fmt_double(cfg.xi));
  kv.emplace_back("neighbor_refresh_interval",
                  std::to_string(cfg.neighbor_refresh_interval));
  kv.emplace_back("emb_dim", std::to_string(cfg.emb_dim));
  kv.emplace_back("hidden_dim", std::to_string(cfg.hidden_dim));
  kv.emplace_back("ffnn_dim", std::to_string(cfg.ffnn_dim));
  kv.emplace_back("batch_size", std::to_string(cfg.batch_size));
  kv.emplace_back("learning_rate", fmt_double(cfg.learning_rate));
  kv.emplace_back("decay_rate", fmt_double(cfg.decay_rate));
  kv.emplace_back("adam_beta1", fmt_double(cfg.adam_beta1));
  kv.emplace_back("adam_beta2", fmt_double(cfg.adam_beta2));
  kv.emplace_back("adam_eps", fmt_double(cfg.adam_eps));
  kv.emplace_back("dropout", fmt_double(cfg.dropout));
  kv.emplace_back("grad_clip", fmt_double(cfg.grad_clip));
  kv.emplace_back("max_epochs", std::to_string(cfg.max_epochs));
  kv.emplace_back("patience", std::to_string(cfg.patience));
  kv.emplace_back("seed", std::to_string(cfg.seed));
  kv.emplace_back("min_freq", std::to_string(cfg.min_freq));
  kv.emplace_back("max_vocab", std::to_string(cfg.max_vocab));
  kv.emplace_back("pretrained_vectors", cfg.pretrained_vectors);
  kv.emplace_back("normalize_embeddings",
                  cfg.normalize_embeddings ? "true" : "false");
  kv.emplace_back("cosine_neighbors", cfg.cosine_neighbors ? "true" : "false");
  kv.emplace_back("perturb_before_dropout",
                  cfg.perturb_before_dropout ? "true" : "false");
  kv.emplace_back("attack_rank_by_field_norm",
                  cfg.attack_rank_by_field_norm ? "true" : "false");
  return kv;
}

TrainConfig config_from_kv(const KvList& kv) {
  return build_config(kv, {});
}

}  // namespace iadvtext
