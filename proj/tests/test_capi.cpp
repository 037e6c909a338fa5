#include <doctest.h>

#include <cstdlib>

#include <json.hpp>

#include "checkpoint.hpp"
#include "interpret.hpp"
#include "testutil.hpp"

#include "iadvtext.h"

using namespace iadvtext;

namespace {

// Small synthetic corpus on disk, shared by the C API and CLI tests.
struct Corpus {
  testutil::TempDir dir{"capi"};
  Corpus() {
    const char* err = nullptr;
    if (iadv_generate_synthetic(40, 60, 30, 16, 16, 5, dir.path().c_str()) !=
        IADV_OK)
      err = iadv_last_error();
    REQUIRE(err == nullptr);
  }
  std::string file(const std::string& name) const { return dir.file(name); }
};

struct Config {
  iadv_config* cfg = iadv_config_new();
  ~Config() { iadv_config_free(cfg); }
  void set(const char* k, const char* v) {
    REQUIRE(iadv_config_set(cfg, k, v) == IADV_OK);
  }
  void set_small(const char* method) {
    set("method", method);
    set("emb_dim", "6");
    set("hidden_dim", "8");
    set("ffnn_dim", "6");
    set("batch_size", "16");
    set("max_epochs", "2");
    set("k_neighbors", "4");
    set("epsilon", "0.5");
    set("dropout", "0.2");
    set("seed", "42");
  }
};

struct Data {
  iadv_dataset* d = nullptr;
  ~Data() { iadv_dataset_free(d); }
};

struct Model {
  iadv_model* m = nullptr;
  ~Model() { iadv_model_free(m); }
};

}  // namespace

TEST_SUITE_BEGIN("capi");

TEST_CASE("config rejects unknown keys and bad values") {
  Config c;
  CHECK(iadv_config_set(c.cfg, "definitely_not_a_key", "1") ==
        IADV_ERR_CONFIG);
  CHECK(std::string(iadv_last_error()).find("definitely_not_a_key") !=
        std::string::npos);
  CHECK(iadv_config_set(c.cfg, "epsilon", "banana") == IADV_ERR_CONFIG);
  CHECK(iadv_config_set(c.cfg, "epsilon", "1.5") == IADV_OK);
}

TEST_CASE("dataset loading surfaces data errors with paths") {
  Data d;
  CHECK(iadv_dataset_load_classification("/nonexistent/x.txt", 1, &d.d) ==
        IADV_ERR_DATA);
  Corpus corpus;
  CHECK(iadv_dataset_load_classification(corpus.file("train.txt").c_str(), 1,
                                         &d.d) == IADV_OK);
  CHECK(iadv_dataset_size(d.d) == 60);
}

TEST_CASE("train, eval, attack, visualize, neighbors through the C API") {
  Corpus corpus;
  Data train, dev, test, unlabeled;
  REQUIRE(iadv_dataset_load_classification(corpus.file("train.txt").c_str(), 1,
                                           &train.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("dev.txt").c_str(), 1,
                                           &dev.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("test.txt").c_str(), 1,
                                           &test.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("unlabeled.txt").c_str(),
                                           0, &unlabeled.d) == IADV_OK);

  Config cfg;
  cfg.set_small("iadvt");
  const std::string ckpt = corpus.file("model.ckpt");
  const std::string log_path = corpus.file("train.log");
  double dev_metric = -1.0;
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, nullptr, ckpt.c_str(),
                     log_path.c_str(), 0, &dev_metric) == IADV_OK);
  CHECK(dev_metric >= 0.0);
  CHECK(dev_metric <= 1.0);

  SUBCASE("the training log has one tab-separated line per epoch") {
    const auto log = testutil::read_file(log_path);
    int lines = 0;
    for (char ch : log)
      if (ch == '\n') ++lines;
    CHECK(lines == 2);
    CHECK(log.find('\t') != std::string::npos);
  }

  Model model;
  REQUIRE(iadv_model_load(ckpt.c_str(), &model.m) == IADV_OK);

  SUBCASE("eval emits machine-parsable key/value lines") {
    char* tsv = nullptr;
    REQUIRE(iadv_eval(model.m, test.d, &tsv) == IADV_OK);
    const std::string out(tsv);
    iadv_string_free(tsv);
    CHECK(out.find("error_rate\t") == 0);
    const double err = std::stod(out.substr(11));
    CHECK(err >= 0.0);
    CHECK(err <= 1.0);

    // Offline recomputation through the core library agrees.
    auto ck = load_checkpoint(ckpt);
    auto examples = [&] {
      std::vector<SentenceExample> out_ex;
      for (const auto& r : load_classification(corpus.file("test.txt"), true))
        out_ex.push_back(encode_classification(r, ck.vocab, &ck.labels));
      return out_ex;
    }();
    auto pred = predict(ck.params, examples);
    CHECK(err == doctest::Approx(error_rate(pred.labels, pred.gold))
                     .epsilon(1e-9));
  }

  SUBCASE("attack writes a JSON report whose summary matches a recount") {
    const std::string report_path = corpus.file("attack.json");
    char* summary = nullptr;
    REQUIRE(iadv_attack(model.m, test.d, 1, nullptr, report_path.c_str(),
                        &summary) == IADV_OK);
    std::string s(summary);
    iadv_string_free(summary);
    REQUIRE(s.find("flip_rate\t") != std::string::npos);

    auto report = report_from_json(testutil::read_file(report_path));
    CHECK(report.sentences.size() == 16);
    long flips = 0;
    for (const auto& sent : report.sentences) {
      REQUIRE(sent.attack.has_value());
      if (sent.attack->flipped) ++flips;
    }
    const double recount = static_cast<double>(flips) / 16.0;
    const double reported = std::stod(s.substr(s.find("flip_rate\t") + 10));
    CHECK(reported == doctest::Approx(recount).epsilon(1e-9));
  }

  SUBCASE("attack with N=0 flips nothing") {
    char* summary = nullptr;
    REQUIRE(iadv_attack(model.m, test.d, 0, nullptr, nullptr, &summary) ==
            IADV_OK);
    const std::string s(summary);
    iadv_string_free(summary);
    CHECK(s.find("flip_rate\t0.000000") != std::string::npos);
    CHECK(s.find("mean_loss_delta\t0.000000") != std::string::npos);
  }

  SUBCASE("visualize produces identical candidate sets in json and html") {
    const std::string jpath = corpus.file("viz.json");
    const std::string hpath = corpus.file("viz.html");
    REQUIRE(iadv_visualize(model.m, test.d, nullptr, 3, "json",
                           jpath.c_str()) == IADV_OK);
    REQUIRE(iadv_visualize(model.m, test.d, nullptr, 3, "html",
                           hpath.c_str()) == IADV_OK);
    auto report = report_from_json(testutil::read_file(jpath));
    const std::string html = testutil::read_file(hpath);
    for (const auto& sent : report.sentences)
      for (const auto& cell : sent.cells)
        for (const auto& cand : cell.candidates)
          CHECK(html.find(cand.word) != std::string::npos);

    // top_m = 1 keeps exactly one candidate per non-empty cell.
    const std::string jpath1 = corpus.file("viz1.json");
    REQUIRE(iadv_visualize(model.m, test.d, nullptr, 1, "json",
                           jpath1.c_str()) == IADV_OK);
    auto narrow = report_from_json(testutil::read_file(jpath1));
    for (const auto& sent : narrow.sentences)
      for (const auto& cell : sent.cells)
        CHECK(cell.candidates.size() <= 1);
  }

  SUBCASE("neighbors are sorted by non-decreasing distance") {
    char* tsv = nullptr;
    REQUIRE(iadv_neighbors(model.m, "poskw0", 5, &tsv) == IADV_OK);
    std::string s(tsv);
    iadv_string_free(tsv);
    double prev = -1.0;
    int rows = 0;
    size_t pos = 0;
    while (pos < s.size()) {
      const size_t tab = s.find('\t', pos);
      const size_t nl = s.find('\n', tab);
      const double d = std::stod(s.substr(tab + 1, nl - tab - 1));
      CHECK(d >= prev);
      prev = d;
      ++rows;
      pos = nl + 1;
    }
    CHECK(rows == 5);
  }

  SUBCASE("visualization with an advt override uses cosine ranking") {
    const std::string path = corpus.file("viz-advt.json");
    REQUIRE(iadv_visualize(model.m, test.d, "advt", 2, "json",
                           path.c_str()) == IADV_OK);
    auto report = report_from_json(testutil::read_file(path));
    CHECK(report.method == std::string("advt"));
  }
}

TEST_CASE("vat trains against unlabeled data and notes its absence") {
  Corpus corpus;
  Data train, dev, unlabeled;
  REQUIRE(iadv_dataset_load_classification(corpus.file("train.txt").c_str(), 1,
                                           &train.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("dev.txt").c_str(), 1,
                                           &dev.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("unlabeled.txt").c_str(),
                                           0, &unlabeled.d) == IADV_OK);
  Config cfg;
  cfg.set_small("vat");
  cfg.set("max_epochs", "1");
  const std::string ckpt = corpus.file("vat.ckpt");
  // Without unlabeled data: the degenerate supervised-KL variant still runs.
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, nullptr, ckpt.c_str(), nullptr,
                     0, nullptr) == IADV_OK);
  // With unlabeled data.
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, unlabeled.d, ckpt.c_str(),
                     nullptr, 0, nullptr) == IADV_OK);
}

TEST_CASE("iadvt epsilon defaults to 15 when unset") {
  Corpus corpus;
  Data train, dev;
  REQUIRE(iadv_dataset_load_classification(corpus.file("train.txt").c_str(), 1,
                                           &train.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("dev.txt").c_str(), 1,
                                           &dev.d) == IADV_OK);
  Config cfg;
  cfg.set("method", "iadvt");
  cfg.set("emb_dim", "6");
  cfg.set("hidden_dim", "8");
  cfg.set("ffnn_dim", "6");
  cfg.set("max_epochs", "1");
  cfg.set("k_neighbors", "3");
  const std::string ckpt = corpus.file("eps.ckpt");
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, nullptr, ckpt.c_str(), nullptr,
                     0, nullptr) == IADV_OK);
  auto ck = load_checkpoint(ckpt);
  CHECK(ck.config.epsilon == 15.0);
  CHECK(ck.config.xi == doctest::Approx(1.5));
}

TEST_CASE("checkpoint round-trip is bit-identical") {
  testutil::TempDir dir("ckpt");
  auto params = testutil::random_model(Task::kClassify, 20, 6, 8, 6, 2, 77);
  Vocabulary vocab;
  for (int i = 0; i < 17; ++i) vocab.add("w" + std::to_string(i));
  LabelMap labels;
  labels.add("neg");
  labels.add("pos");
  TrainConfig cfg = build_config({}, {{"method", "iadvt"},
                                      {"emb_dim", "6"},
                                      {"hidden_dim", "8"},
                                      {"ffnn_dim", "6"}});

  const std::string p1 = dir.file("a.ckpt");
  const std::string p2 = dir.file("b.ckpt");
  save_checkpoint(p1, "test-model", cfg, vocab, labels, params);
  auto loaded = load_checkpoint(p1);
  CHECK(loaded.model_id == "test-model");
  CHECK(loaded.vocab.size() == vocab.size());
  CHECK(loaded.labels.name(1) == "pos");
  save_checkpoint(p2, loaded.model_id, loaded.config, loaded.vocab,
                  loaded.labels, loaded.params);
  CHECK(testutil::read_file(p1) == testutil::read_file(p2));

  // Every tensor value survives exactly.
  auto a = params.named_parameters();
  auto b = loaded.params.named_parameters();
  REQUIRE(a.size() == b.size());
  for (size_t i = 0; i < a.size(); ++i)
    CHECK(a[i].second->values == b[i].second->values);
}

TEST_CASE("checkpoint version and corruption checks") {
  testutil::TempDir dir("badckpt");
  testutil::write_file(dir.file("bad.ckpt"), "some other format v9\njunk\n");
  iadv_model* m = nullptr;
  CHECK(iadv_model_load(dir.file("bad.ckpt").c_str(), &m) ==
        IADV_ERR_CHECKPOINT);
  CHECK(iadv_model_load(dir.file("absent.ckpt").c_str(), &m) ==
        IADV_ERR_CHECKPOINT);
}

TEST_CASE("training twice with one seed produces bit-identical checkpoints") {
  Corpus corpus;
  Data train, dev;
  REQUIRE(iadv_dataset_load_classification(corpus.file("train.txt").c_str(), 1,
                                           &train.d) == IADV_OK);
  REQUIRE(iadv_dataset_load_classification(corpus.file("dev.txt").c_str(), 1,
                                           &dev.d) == IADV_OK);
  Config cfg;
  cfg.set_small("advt");
  cfg.set("max_epochs", "2");
  const std::string c1 = corpus.file("d1.ckpt");
  const std::string c2 = corpus.file("d2.ckpt");
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, nullptr, c1.c_str(), nullptr, 0,
                     nullptr) == IADV_OK);
  REQUIRE(iadv_train(cfg.cfg, train.d, dev.d, nullptr, c2.c_str(), nullptr, 0,
                     nullptr) == IADV_OK);
  CHECK(testutil::read_file(c1) == testutil::read_file(c2));
}

TEST_SUITE_END();

// ---------------------------------------------------------------------------

TEST_SUITE_BEGIN("cli");

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

CliRun run_cli(const std::string& args, const std::string& out_file) {
  const std::string cmd = std::string(IADV_CLI_PATH) + " " + args + " > " +
                          out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  CliRun r;
  r.code = WEXITSTATUS(raw);
  r.out = testutil::read_file(out_file);
  return r;
}

}  // namespace

TEST_CASE("end-to-end: generate, train, eval, attack, visualize, neighbors") {
  testutil::TempDir dir("cli");
  const std::string d = dir.path().string();

  auto gen = run_cli("generate --out " + d +
                         " --vocab-size 40 --train 60 --unlabeled 20 "
                         "--dev 16 --test 16 --seed 5",
                     dir.file("gen.out"));
  REQUIRE(gen.code == 0);

  auto train = run_cli(
      "train --train " + d + "/train.txt --dev " + d + "/dev.txt --out " + d +
          "/m.ckpt --method iadvt --epochs 2 --k 4 --epsilon 0.5 "
          "--set emb_dim=6 --set hidden_dim=8 --set ffnn_dim=6 "
          "--set dropout=0.2 --seed 7 --log " +
          d + "/train.log",
      dir.file("train.out"));
  REQUIRE_MESSAGE(train.code == 0, train.out);
  CHECK(train.out.find("dev_metric\t") != std::string::npos);
  CHECK_FALSE(testutil::read_file(d + "/train.log").empty());

  auto eval = run_cli("eval --model " + d + "/m.ckpt --data " + d +
                          "/test.txt",
                      dir.file("eval.out"));
  REQUIRE_MESSAGE(eval.code == 0, eval.out);
  CHECK(eval.out.find("error_rate\t") != std::string::npos);

  auto attack = run_cli("attack --model " + d + "/m.ckpt --data " + d +
                            "/test.txt --n-subs 1 --out " + d +
                            "/attack.json",
                        dir.file("attack.out"));
  REQUIRE_MESSAGE(attack.code == 0, attack.out);
  CHECK(attack.out.find("flip_rate\t") != std::string::npos);
  CHECK_FALSE(testutil::read_file(d + "/attack.json").empty());

  auto viz = run_cli("visualize --model " + d + "/m.ckpt --data " + d +
                         "/test.txt --top-m 2 --format html --out " + d +
                         "/viz.html",
                     dir.file("viz.out"));
  REQUIRE_MESSAGE(viz.code == 0, viz.out);
  CHECK(testutil::read_file(d + "/viz.html").find("<mark") !=
        std::string::npos);

  auto nbrs = run_cli("neighbors --model " + d + "/m.ckpt --word poskw0 --k 3",
                      dir.file("nbrs.out"));
  REQUIRE_MESSAGE(nbrs.code == 0, nbrs.out);
  int lines = 0;
  for (char ch : nbrs.out)
    if (ch == '\n') ++lines;
  CHECK(lines == 3);
}

TEST_CASE("exit codes: usage=1, data=2, checkpoint=3") {
  testutil::TempDir dir("clierr");
  const std::string d = dir.path().string();

  auto usage = run_cli("train --train x", dir.file("u.out"));
  CHECK(usage.code == 1);  // missing required flags

  auto badkey = run_cli(
      "train --train a --dev b --out c --set bogus_key=1",
      dir.file("k.out"));
  CHECK(badkey.code == 1);

  auto nodata = run_cli(
      "train --train " + d + "/absent.txt --dev " + d + "/absent.txt --out " +
          d + "/m.ckpt",
      dir.file("d.out"));
  CHECK(nodata.code == 2);

  testutil::write_file(dir.file("junk.ckpt"), "not a checkpoint\n");
  auto badckpt = run_cli("eval --model " + dir.file("junk.ckpt") +
                             " --data " + d + "/absent.txt",
                         dir.file("c.out"));
  CHECK(badckpt.code == 3);
}

TEST_CASE("config file plus flag precedence drives training") {
  testutil::TempDir dir("clicfg");
  const std::string d = dir.path().string();
  auto gen = run_cli("generate --out " + d +
                         " --vocab-size 40 --train 40 --unlabeled 1 --dev 8 "
                         "--test 8 --seed 2",
                     dir.file("gen.out"));
  REQUIRE(gen.code == 0);
  testutil::write_file(dir.file("run.cfg"),
                       "method = baseline\nemb_dim = 6\nhidden_dim = 8\n"
                       "ffnn_dim = 6\nmax_epochs = 1\ndropout = 0\n");
  auto train = run_cli("train --config " + dir.file("run.cfg") + " --train " +
                           d + "/train.txt --dev " + d + "/dev.txt --out " +
                           d + "/m.ckpt --method advt --epsilon 0.3",
                       dir.file("t.out"));
  REQUIRE_MESSAGE(train.code == 0, train.out);
  // The flag beat the file: the checkpoint records method=advt.
  auto ck = load_checkpoint(d + "/m.ckpt");
  CHECK(ck.config.method == Method::kAdvt);
  CHECK(ck.config.epsilon == 0.3);
  CHECK(ck.config.max_epochs == 1);  // from the file
}

TEST_SUITE_END();
