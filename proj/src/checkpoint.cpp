#include "checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace iadvtext {

namespace {

constexpr const char* kMagic = "iadvtext-checkpoint v1";

void require(bool ok, const std::string& msg) {
  if (!ok) fail(ErrorKind::kCheckpoint, msg);
}

std::string next_line(std::istream& in, const std::string& path) {
  std::string line;
  require(static_cast<bool>(std::getline(in, line)),
          path + ": truncated checkpoint header");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

std::pair<std::string, std::string> split_kv(const std::string& line,
                                             const std::string& path) {
  const size_t eq = line.find(" = ");
  require(eq != std::string::npos, path + ": malformed header line: " + line);
  return {line.substr(0, eq), line.substr(eq + 3)};
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& model_id,
                     const TrainConfig& config, const Vocabulary& vocab,
                     const LabelMap& labels, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kCheckpoint, "cannot write checkpoint: " + path);

  out << kMagic << '\n';
  out << "model_id = " << model_id << '\n';
  for (const auto& [k, v] : config_to_kv(config))
    out << "cfg." << k << " = " << v << '\n';
  out << "n_classes = " << params.n_classes << '\n';

  out << "vocab " << vocab.size() << '\n';
  for (int i = 0; i < vocab.size(); ++i) out << vocab.token(i) << '\n';
  out << "labels " << labels.size() << '\n';
  for (int i = 0; i < labels.size(); ++i) out << labels.name(i) << '\n';

  const auto named = params.named_parameters();
  for (const auto& [name, t] : named)
    out << "tensor " << name << ' ' << t->rows << ' ' << t->cols << '\n';
  out << "payload\n";
  for (const auto& [name, t] : named) {
    (void)name;
    out.write(reinterpret_cast<const char*>(t->values.data()),
              static_cast<std::streamsize>(t->values.size() * sizeof(double)));
  }
  if (!out) fail(ErrorKind::kCheckpoint, "write failed: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kCheckpoint, "cannot open checkpoint: " + path);

  require(next_line(in, path) == kMagic,
          path + ": not an iadvtext v1 checkpoint");

  LoadedCheckpoint ck;
  KvList cfg_kv;
  int n_classes = -1;
  std::string line;
  while (true) {
    line = next_line(in, path);
    if (line.rfind("vocab ", 0) == 0) break;
    auto [key, value] = split_kv(line, path);
    if (key == "model_id") ck.model_id = value;
    else if (key == "n_classes") n_classes = std::stoi(value);
    else if (key.rfind("cfg.", 0) == 0) cfg_kv.emplace_back(key.substr(4), value);
    else fail(ErrorKind::kCheckpoint, path + ": unknown header key " + key);
  }
  ck.config = config_from_kv(cfg_kv);
  require(n_classes > 0, path + ": missing n_classes");

  const int vocab_n = std::stoi(line.substr(6));
  Vocabulary vocab;
  for (int i = 0; i < vocab_n; ++i) {
    const std::string tok = next_line(in, path);
    if (i < 3) {
      require(vocab.token(i) == tok, path + ": special token mismatch");
    } else {
      vocab.add(tok);
    }
  }
  require(vocab.size() == vocab_n, path + ": vocabulary size mismatch");
  ck.vocab = std::move(vocab);

  line = next_line(in, path);
  require(line.rfind("labels ", 0) == 0, path + ": expected labels section");
  const int label_n = std::stoi(line.substr(7));
  for (int i = 0; i < label_n; ++i) ck.labels.add(next_line(in, path));

  struct Decl {
    std::string name;
    int rows, cols;
  };
  std::vector<Decl> decls;
  while (true) {
    line = next_line(in, path);
    if (line == "payload") break;
    std::istringstream ss(line);
    std::string tag;
    Decl d;
    ss >> tag >> d.name >> d.rows >> d.cols;
    require(static_cast<bool>(ss) && tag == "tensor",
            path + ": malformed tensor declaration: " + line);
    decls.push_back(d);
  }

  // Rebuild the parameter struct, then overwrite values from the payload in
  // declared order.
  const TrainConfig& cfg = ck.config;
  std::mt19937_64 rng(0);
  ck.params = init_model(cfg.task, ck.vocab.size(), cfg.emb_dim,
                         cfg.hidden_dim, cfg.ffnn_dim, n_classes, rng);
  auto named = ck.params.named_parameters();
  require(named.size() == decls.size(), path + ": tensor count mismatch");
  for (size_t i = 0; i < named.size(); ++i) {
    auto& [name, t] = named[i];
    require(name == decls[i].name, path + ": tensor order mismatch at " + name);
    require(t->rows == decls[i].rows && t->cols == decls[i].cols,
            path + ": shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(t->values.data()),
            static_cast<std::streamsize>(t->values.size() * sizeof(double)));
    require(in.gcount() ==
                static_cast<std::streamsize>(t->values.size() * sizeof(double)),
            path + ": truncated payload at " + name);
  }
  return ck;
}

}  // namespace iadvtext
