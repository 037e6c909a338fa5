#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace iadvtext;

TEST_SUITE_BEGIN("models");

namespace {

LstmParams zero_lstm(Tape& tape, int in_dim, int hidden) {
  LstmParams p;
  p.wx = tape.zeros(in_dim, 4 * hidden, true);
  p.wh = tape.zeros(hidden, 4 * hidden, true);
  p.b = tape.zeros(1, 4 * hidden, true);
  return p;
}

std::vector<std::vector<double>> ones_mask(int steps, int batch) {
  return std::vector<std::vector<double>>(steps,
                                          std::vector<double>(batch, 1.0));
}

}  // namespace

TEST_CASE("lstm_step with all-zero weights and inputs yields a zero state") {
  Tape tape;
  auto p = zero_lstm(tape, 3, 4);
  auto w = tape.zeros(1, 3);
  auto h0 = tape.zeros(1, 4);
  auto c0 = tape.zeros(1, 4);
  auto [h, c] = lstm_step(tape, p, w, h0, c0);
  for (double v : h->values) CHECK(v == 0.0);
  for (double v : c->values) CHECK(v == 0.0);
}

TEST_CASE("a saturated forget gate carries the cell state through") {
  Tape tape;
  auto p = zero_lstm(tape, 2, 3);
  // Forget-gate bias 50: f = sigmoid(50) ~ 1, so c = c_prev + i*cand.
  for (int i = 3; i < 6; ++i) p.b->values[i] = 50.0;
  auto w = tape.constant(1, 2, {0.3, -0.2});
  auto h0 = tape.zeros(1, 3);
  auto c0 = tape.constant(1, 3, {1.5, -0.5, 2.0});
  auto [h, c] = lstm_step(tape, p, w, h0, c0);
  // With zero weights the candidate is tanh(0) = 0, so c == c_prev.
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(c->values[i] - c0->values[i]) <= 1e-12);
  (void)h;
}

TEST_CASE("gradients through three chained LSTM steps match finite differences") {
  testutil::LossEnv env;
  env.params = testutil::random_model(Task::kClassify, 15, 5, 7, 6, 3, 99);
  std::mt19937_64 rng(100);
  env.examples = {testutil::random_example(Task::kClassify, 15, 3, 3, rng)};
  env.init_addend();
  CHECK(testutil::check_gradients(env).max_rel_err <= 1e-6);
}

TEST_CASE("zero output weights give the uniform distribution") {
  auto params = testutil::random_model(Task::kClassify, 10, 4, 5, 4, 4, 1);
  std::fill(params.head.w2->values.begin(), params.head.w2->values.end(), 0.0);
  std::fill(params.head.b2->values.begin(), params.head.b2->values.end(), 0.0);
  std::mt19937_64 rng(2);
  auto e = testutil::random_example(Task::kClassify, 10, 5, 4, rng);
  Tape tape;
  Batch b = make_batch({&e}, Task::kClassify);
  auto eb = embed_batch(tape, params, b, 0.0, nullptr);
  auto trace = classify(tape, params, eb.targets, b.mask);
  for (int c = 0; c < 4; ++c)
    CHECK(trace.probs(0)[c] == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("probabilities sum to one within 1e-12 on random inputs") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 5; ++trial) {
    auto params =
        testutil::random_model(Task::kClassify, 20, 5, 6, 5, 3, 31 + trial);
    auto e = testutil::random_example(Task::kClassify, 20, 6, 3, rng);
    Tape tape;
    Batch b = make_batch({&e}, Task::kClassify);
    auto eb = embed_batch(tape, params, b, 0.0, nullptr);
    auto trace = classify(tape, params, eb.targets, b.mask);
    double s = 0.0;
    for (double p : trace.probs(0)) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("a zero perturbation leaves the eval-mode trace bit-identical") {
  auto params = testutil::random_model(Task::kClassify, 12, 4, 5, 4, 2, 7);
  std::mt19937_64 rng(8);
  auto e = testutil::random_example(Task::kClassify, 12, 5, 2, rng);
  Batch b = make_batch({&e}, Task::kClassify);

  Tape t1;
  auto eb1 = embed_batch(t1, params, b, 0.0, nullptr);
  auto clean = forward_with_field(t1, params, eb1, b);

  Tape t2;
  auto eb2 = embed_batch(t2, params, b, 0.0, nullptr);
  std::vector<TensorPtr> zero_addends;
  for (int t = 0; t < b.steps; ++t)
    zero_addends.push_back(
        t2.constant(b.size, params.emb_dim,
                    std::vector<double>(static_cast<size_t>(b.size) *
                                            params.emb_dim,
                                        0.0)));
  auto perturbed = forward_with_field(t2, params, eb2, b, zero_addends);
  CHECK(clean.logp[0]->values == perturbed.logp[0]->values);
}

TEST_CASE("tagger emits well-formed per-step distributions, including T=1") {
  std::mt19937_64 rng(41);
  for (int len : {1, 4}) {
    auto params = testutil::random_model(Task::kTag, 15, 4, 5, 4, 2, 41);
    auto e = testutil::random_example(Task::kTag, 15, len, 2, rng);
    Tape tape;
    Batch b = make_batch({&e}, Task::kTag);
    auto eb = embed_batch(tape, params, b, 0.0, nullptr);
    auto trace = tag(tape, params, eb.targets, b.mask);
    REQUIRE(static_cast<int>(trace.logp.size()) == len);
    for (int t = 0; t < len; ++t) {
      double s = 0.0;
      for (double p : trace.probs(t)) s += p;
      CHECK(std::abs(s - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("reversing the input reverses the backward LSTM's state sequence") {
  auto params = testutil::random_model(Task::kTag, 12, 4, 5, 4, 2, 17);
  std::vector<int> ids{5, 9};
  std::vector<int> rev{9, 5};

  // Hand orchestration on a two-step toy: the backward LSTM over (w1, w2)
  // visits w2 then w1; over the reversed input the forward LSTM does the
  // same. Their final states must coincide.
  Tape tape;
  auto x1 = tape.gather_rows(params.embedding.rows, {ids[0]});
  auto x2 = tape.gather_rows(params.embedding.rows, {ids[1]});
  auto h0 = tape.zeros(1, params.hidden_dim);
  auto c0 = tape.zeros(1, params.hidden_dim);
  auto [hb2, cb2] = lstm_step(tape, params.bwd, x2, h0, c0);
  auto [hb1, cb1] = lstm_step(tape, params.bwd, x1, hb2, cb2);

  auto r1 = tape.gather_rows(params.embedding.rows, {rev[0]});
  auto r2 = tape.gather_rows(params.embedding.rows, {rev[1]});
  auto [hf1, cf1] = lstm_step(tape, params.bwd, r1, h0, c0);
  auto [hf2, cf2] = lstm_step(tape, params.bwd, r2, hf1, cf1);

  CHECK(hb1->values == hf2->values);
  CHECK(cb1->values == cf2->values);
}

TEST_CASE("nll_loss trivial values") {
  Tape tape;
  SUBCASE("uniform binary distribution costs ln 2") {
    auto logp = tape.log_softmax(tape.constant(1, 2, {0.0, 0.0}));
    ForwardTrace trace;
    trace.task = Task::kClassify;
    trace.batch = 1;
    trace.steps = 1;
    trace.logp = {logp};
    auto loss = nll_loss(tape, trace, {{0}}, ones_mask(1, 1));
    CHECK(loss->scalar() == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("a certain prediction costs zero") {
    auto logp = tape.log_softmax(tape.constant(1, 2, {200.0, -200.0}));
    ForwardTrace trace;
    trace.task = Task::kClassify;
    trace.batch = 1;
    trace.steps = 1;
    trace.logp = {logp};
    CHECK(nll_loss(tape, trace, {{0}}, ones_mask(1, 1))->scalar() == 0.0);
  }
  SUBCASE("three uniform tagging steps cost 3 ln 2") {
    ForwardTrace trace;
    trace.task = Task::kTag;
    trace.batch = 1;
    trace.steps = 3;
    for (int t = 0; t < 3; ++t)
      trace.logp.push_back(tape.log_softmax(tape.constant(1, 2, {0.0, 0.0})));
    auto loss = nll_loss(tape, trace, {{1}, {0}, {1}}, ones_mask(3, 1));
    CHECK(loss->scalar() ==
          doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("invalid class ids are rejected") {
    auto logp = tape.log_softmax(tape.constant(1, 2, {0.0, 0.0}));
    ForwardTrace trace;
    trace.task = Task::kClassify;
    trace.batch = 1;
    trace.steps = 1;
    trace.logp = {logp};
    CHECK_THROWS_AS(nll_loss(tape, trace, {{2}}, ones_mask(1, 1)), Error);
  }
}

TEST_CASE("kl_loss: identity, analytic value, and non-negativity") {
  SUBCASE("identical traces give zero within 1e-12") {
    auto params = testutil::random_model(Task::kClassify, 10, 4, 5, 4, 3, 3);
    std::mt19937_64 rng(4);
    auto e = testutil::random_example(Task::kClassify, 10, 4, 3, rng);
    Tape tape;
    Batch b = make_batch({&e}, Task::kClassify);
    auto eb = embed_batch(tape, params, b, 0.0, nullptr);
    auto trace = forward_with_field(tape, params, eb, b);
    auto kl = kl_loss(tape, trace, trace, b.mask);
    CHECK(std::abs(kl->scalar()) <= 1e-12);
  }
  SUBCASE("KL((1,0) || (1/2,1/2)) = ln 2") {
    CHECK(kl_divergence({1.0, 0.0}, {0.0, -700.0},
                        {std::log(0.5), std::log(0.5)}) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("KL >= 0 on random distribution pairs") {
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
      std::vector<double> p(4), q(4);
      double sp = 0.0, sq = 0.0;
      for (int i = 0; i < 4; ++i) {
        p[i] = u(rng);
        q[i] = u(rng);
        sp += p[i];
        sq += q[i];
      }
      std::vector<double> logp(4), logq(4);
      for (int i = 0; i < 4; ++i) {
        p[i] /= sp;
        q[i] /= sq;
        logp[i] = std::log(p[i]);
        logq[i] = std::log(q[i]);
      }
      CHECK(kl_divergence(p, logp, logq) >= -1e-12);
    }
  }
  SUBCASE("mismatched traces are rejected") {
    Tape tape;
    ForwardTrace a, b2;
    a.task = b2.task = Task::kTag;
    a.steps = 2;
    b2.steps = 3;
    CHECK_THROWS_AS(kl_loss(tape, a, b2, {}), Error);
  }
}

TEST_CASE("no gradient flows through the clean side of the KL") {
  auto params = testutil::random_model(Task::kClassify, 10, 4, 5, 4, 2, 23);
  std::mt19937_64 rng(24);
  auto e = testutil::random_example(Task::kClassify, 10, 3, 2, rng);
  Tape tape;
  Batch b = make_batch({&e}, Task::kClassify);
  auto eb = embed_batch(tape, params, b, 0.0, nullptr);
  auto clean = forward_with_field(tape, params, eb, b);

  // Perturbed forward through separate input nodes.
  std::vector<TensorPtr> addends;
  std::normal_distribution<double> normal(0.0, 0.1);
  for (int t = 0; t < b.steps; ++t) {
    std::vector<double> v(static_cast<size_t>(b.size) * params.emb_dim);
    for (auto& x : v) x = normal(rng);
    addends.push_back(tape.constant(b.size, params.emb_dim, v));
  }
  std::vector<TensorPtr> inputs;
  auto perturbed = forward_with_field(tape, params, eb, b, addends, &inputs);
  auto kl = kl_loss(tape, clean, perturbed, b.mask);
  tape.backward(kl);

  // The clean logits node must stay untouched by the backward pass while the
  // perturbed one carries gradient.
  CHECK(clean.logits[0]->grad.empty());
  CHECK_FALSE(perturbed.logits[0]->grad.empty());
}

TEST_CASE("masked tokens change neither the tagging loss nor its gradients") {
  auto params = testutil::random_model(Task::kTag, 14, 4, 5, 4, 2, 29);
  SentenceExample e;
  e.ids = {4, 7, 9};
  e.labels = {0, 1, 0};
  e.mask = {1.0, 1.0, 0.0};

  auto loss_and_grad = [&](int masked_token) {
    SentenceExample copy = e;
    copy.ids[2] = masked_token;
    Tape tape;
    Batch b = make_batch({&copy}, Task::kTag);
    auto eb = embed_batch(tape, params, b, 0.0, nullptr);
    auto trace = forward_with_field(tape, params, eb, b);
    auto loss = nll_loss(tape, trace, b.labels, b.mask);
    tape.backward(loss);
    auto grads = params.fwd.wx->grad_or_zero();
    tape.zero_grads();  // grads live on the shared params
    return std::make_pair(loss->scalar(), grads);
  };
  auto [l1, g1] = loss_and_grad(9);
  auto [l2, g2] = loss_and_grad(13);
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("tagging gradients match finite differences") {
  testutil::LossEnv env;
  env.params = testutil::random_model(Task::kTag, 12, 4, 5, 4, 2, 57);
  std::mt19937_64 rng(58);
  env.examples = {testutil::random_example(Task::kTag, 12, 3, 2, rng)};
  env.init_addend();
  CHECK(testutil::check_gradients(env).max_rel_err <= 1e-6);
}

TEST_CASE("empty sequences are rejected") {
  auto params = testutil::random_model(Task::kClassify, 10, 4, 5, 4, 2, 61);
  Tape tape;
  CHECK_THROWS_AS(classify(tape, params, {}, {}), Error);
}

TEST_SUITE_END();
