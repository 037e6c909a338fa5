#include <doctest.h>

#include <set>

#include "data.hpp"
#include "testutil.hpp"

using namespace iadvtext;

TEST_SUITE_BEGIN("data");

TEST_CASE("classification loader: labels, tokens, and <eos>") {
  testutil::TempDir dir("cls");
  testutil::write_file(dir.file("a.txt"), "pos\tgood movie <eos>\n");
  auto recs = load_classification(dir.file("a.txt"), true);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].label == "pos");
  CHECK(recs[0].tokens ==
        std::vector<std::string>{"good", "movie", "<eos>"});

  testutil::write_file(dir.file("b.txt"), "neg\tbad film\n");
  auto witheos = load_classification(dir.file("b.txt"), true);
  CHECK(witheos[0].tokens ==
        std::vector<std::string>{"bad", "film", "<eos>"});
}

TEST_CASE("classification loader: empty files, blank lines, missing tabs") {
  testutil::TempDir dir("cls2");
  testutil::write_file(dir.file("empty.txt"), "");
  LoadStats stats;
  CHECK(load_classification(dir.file("empty.txt"), true, &stats).empty());
  CHECK(stats.skipped_empty == 0);

  testutil::write_file(dir.file("blank.txt"), "pos\ta b\n\n\nneg\tc d\n");
  auto recs = load_classification(dir.file("blank.txt"), true, &stats);
  CHECK(recs.size() == 2);
  CHECK(stats.skipped_empty == 2);

  testutil::write_file(dir.file("notab.txt"), "pos a b\n");
  CHECK_THROWS_WITH_AS(load_classification(dir.file("notab.txt"), true),
                       doctest::Contains(":1"), Error);

  testutil::write_file(dir.file("unl.txt"), "just some tokens\n");
  auto unl = load_classification(dir.file("unl.txt"), false);
  CHECK(unl[0].label.empty());
  CHECK(unl[0].tokens.size() == 4);  // + <eos>
}

TEST_CASE("classification write/load round-trip is the identity") {
  testutil::TempDir dir("rt");
  std::vector<ClassificationRecord> recs{
      {"pos", {"a", "b", "<eos>"}},
      {"neg", {"c", "<eos>"}},
  };
  write_classification(dir.file("r.txt"), recs, true);
  auto back = load_classification(dir.file("r.txt"), true);
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].label == recs[i].label);
    CHECK(back[i].tokens == recs[i].tokens);
  }
}

TEST_CASE("tagging loader: alignment, blank separators, dangling EOF") {
  testutil::TempDir dir("tag");
  testutil::write_file(dir.file("a.txt"), "I\t0\nam\t0\ngoed\t1\n");
  auto recs = load_tagging(dir.file("a.txt"));  // dangling sentence accepted
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].tokens == std::vector<std::string>{"I", "am", "goed"});
  CHECK(recs[0].labels == std::vector<int>{0, 0, 1});

  testutil::write_file(dir.file("b.txt"), "a\t0\n\n\n\nb\t1\n\n");
  auto two = load_tagging(dir.file("b.txt"));
  CHECK(two.size() == 2);  // double blanks emit no empty record

  testutil::write_file(dir.file("bad.txt"), "a\t0\nb\t2\n");
  CHECK_THROWS_WITH_AS(load_tagging(dir.file("bad.txt")),
                       doctest::Contains(":2"), Error);
}

TEST_CASE("tagging write/load round-trip is the identity") {
  testutil::TempDir dir("tagrt");
  std::vector<TaggingRecord> recs{
      {{"We", "thank", "choose"}, {0, 0, 1}},
      {{"Fine", "."}, {0, 0}},
  };
  write_tagging(dir.file("t.txt"), recs);
  auto back = load_tagging(dir.file("t.txt"));
  REQUIRE(back.size() == recs.size());
  for (size_t i = 0; i < recs.size(); ++i) {
    CHECK(back[i].tokens == recs[i].tokens);
    CHECK(back[i].labels == recs[i].labels);
  }
}

TEST_CASE("tokens containing TAB are rejected at write time") {
  testutil::TempDir dir("tab");
  std::vector<ClassificationRecord> recs{{"pos", {"a\tb"}}};
  CHECK_THROWS_AS(write_classification(dir.file("x.txt"), recs, true), Error);
}

TEST_CASE("label map assigns first-seen ids") {
  LabelMap m;
  CHECK(m.add("pos") == 0);
  CHECK(m.add("neg") == 1);
  CHECK(m.add("pos") == 0);
  CHECK(m.id("neg") == 1);
  CHECK(m.name(0) == "pos");
  CHECK_THROWS_AS(m.id("other"), Error);
}

TEST_CASE("synthetic data: determinism, labels, and disjoint splits") {
  SyntheticConfig cfg;
  cfg.vocab_size = 60;
  cfg.n_train = 120;
  cfg.n_unlabeled = 60;
  cfg.n_dev = 30;
  cfg.n_test = 40;
  cfg.seed = 99;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);

  SUBCASE("same seed, byte-identical dataset") {
    REQUIRE(a.train.size() == b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) {
      CHECK(a.train[i].label == b.train[i].label);
      CHECK(a.train[i].tokens == b.train[i].tokens);
    }
  }

  SUBCASE("every label equals the majority-keyword oracle") {
    const auto pos = synthetic_keywords("pos");
    const auto neg = synthetic_keywords("neg");
    auto count_in = [](const std::vector<std::string>& tokens,
                       const std::vector<std::string>& kws) {
      int n = 0;
      for (const auto& t : tokens)
        for (const auto& k : kws)
          if (t == k) ++n;
      return n;
    };
    for (const auto* split : {&a.train, &a.dev, &a.test}) {
      for (const auto& rec : *split) {
        const int np = count_in(rec.tokens, pos);
        const int nn = count_in(rec.tokens, neg);
        CHECK(np != nn);
        CHECK(rec.label == (np > nn ? "pos" : "neg"));
        CHECK(rec.tokens.size() >= 9);   // 8 + <eos>
        CHECK(rec.tokens.size() <= 21);  // 20 + <eos>
      }
    }
  }

  SUBCASE("splits share no token sequence") {
    std::set<std::string> seen;
    long total = 0;
    for (const auto* split : {&a.train, &a.unlabeled, &a.dev, &a.test}) {
      for (const auto& rec : *split) {
        std::string key;
        for (const auto& t : rec.tokens) key += t + " ";
        seen.insert(key);
        ++total;
      }
    }
    CHECK(static_cast<long>(seen.size()) == total);
  }

  SUBCASE("unlabeled records carry no label") {
    for (const auto& rec : a.unlabeled) CHECK(rec.label.empty());
  }
}

TEST_CASE("the synthetic task is learnable by keyword counting") {
  SyntheticConfig cfg;
  cfg.vocab_size = 200;
  cfg.n_train = 500;
  cfg.n_unlabeled = 1;
  cfg.n_dev = 1;
  cfg.n_test = 400;
  cfg.seed = 7;
  auto data = generate_synthetic(cfg);
  // Bag-of-keywords linear rule: sign of (#pos - #neg).
  const auto pos = synthetic_keywords("pos");
  const auto neg = synthetic_keywords("neg");
  long wrong = 0;
  for (const auto& rec : data.test) {
    int score = 0;
    for (const auto& t : rec.tokens) {
      for (const auto& k : pos)
        if (t == k) ++score;
      for (const auto& k : neg)
        if (t == k) --score;
    }
    const std::string pred = score > 0 ? "pos" : "neg";
    if (pred != rec.label) ++wrong;
  }
  CHECK(static_cast<double>(wrong) / data.test.size() < 0.02);
}

TEST_CASE("synthetic generation rejects undersized vocabularies") {
  SyntheticConfig cfg;
  cfg.vocab_size = 20;  // smaller than the two keyword inventories
  CHECK_THROWS_AS(generate_synthetic(cfg), Error);
}

TEST_CASE("generated files round-trip through the loader") {
  testutil::TempDir dir("gen");
  SyntheticConfig cfg;
  cfg.vocab_size = 50;
  cfg.n_train = 40;
  cfg.n_unlabeled = 10;
  cfg.n_dev = 5;
  cfg.n_test = 5;
  cfg.seed = 3;
  auto data = generate_synthetic(cfg);
  write_classification(dir.file("train.txt"), data.train, true);
  auto back = load_classification(dir.file("train.txt"), true);
  REQUIRE(back.size() == data.train.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].label == data.train[i].label);
    CHECK(back[i].tokens == data.train[i].tokens);
  }
}

TEST_SUITE_END();
