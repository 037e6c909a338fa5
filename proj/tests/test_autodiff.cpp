#include <doctest.h>

#include <cmath>

#include "testutil.hpp"

using namespace iadvtext;

TEST_SUITE_BEGIN("autodiff");

namespace {

// Independent oracle: the naive triple loop in ijk order.
std::vector<double> naive_matmul(const std::vector<double>& a,
                                 const std::vector<double>& b, int m, int k,
                                 int n) {
  std::vector<double> c(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      for (int kk = 0; kk < k; ++kk)
        c[static_cast<size_t>(i) * n + j] +=
            a[static_cast<size_t>(i) * k + kk] * b[static_cast<size_t>(kk) * n + j];
  return c;
}

std::vector<double> random_values(size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

}  // namespace

TEST_CASE("sigmoid at zero is one half") {
  Tape tape;
  auto x = tape.leaf(1, 1, {0.0});
  CHECK(tape.sigmoid(x)->scalar() == 0.5);
}

TEST_CASE("log_softmax of uniform logits") {
  Tape tape;
  auto x = tape.leaf(1, 2, {0.0, 0.0});
  auto y = tape.log_softmax(x);
  CHECK(y->values[0] == -std::log(2.0));
  CHECK(y->values[1] == -std::log(2.0));
}

TEST_CASE("matmul matches the scalar triple-loop oracle exactly") {
  std::mt19937_64 rng(7);
  auto av = random_values(12, rng);
  auto bv = random_values(8, rng);
  const auto expected = naive_matmul(av, bv, 3, 4, 2);
  Tape tape;
  auto c = tape.matmul(tape.leaf(3, 4, av), tape.leaf(4, 2, bv));
  REQUIRE(c->values.size() == expected.size());
  for (size_t i = 0; i < expected.size(); ++i)
    CHECK(c->values[i] == expected[i]);
}

TEST_CASE("shape mismatches are rejected naming both shapes") {
  Tape tape;
  auto a = tape.leaf(2, 3, std::vector<double>(6, 1.0));
  auto b = tape.leaf(2, 3, std::vector<double>(6, 1.0));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b), doctest::Contains("[2,3]"), Error);
  auto c = tape.leaf(3, 2, std::vector<double>(6, 1.0));
  CHECK_THROWS_AS(tape.add(a, c), Error);
  CHECK_THROWS_AS(tape.mul(a, c), Error);
}

TEST_CASE("backward of sum gives all-ones") {
  Tape tape;
  auto x = tape.leaf(2, 3, {1, 2, 3, 4, 5, 6});
  tape.backward(tape.sum(x));
  for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backward of sum of squares") {
  Tape tape;
  auto x = tape.leaf(1, 3, {1, 2, 3});
  tape.backward(tape.sum(tape.mul(x, x)));
  CHECK(x->grad[0] == 2.0);
  CHECK(x->grad[1] == 4.0);
  CHECK(x->grad[2] == 6.0);
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
  Tape tape;
  auto x = tape.leaf(1, 3, {1, 2, 3});
  CHECK_THROWS_AS(tape.backward(x), Error);
  Tape other;
  auto y = other.sum(other.leaf(1, 2, {1, 2}));
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("input_gradients requires a completed backward pass") {
  Tape tape;
  auto x = tape.leaf(1, 2, {1, 2});
  auto loss = tape.sum(x);
  CHECK_THROWS_AS(tape.input_gradients({x}), Error);
  tape.backward(loss);
  auto grads = tape.input_gradients({x});
  CHECK(grads[0] == std::vector<double>{1.0, 1.0});
}

TEST_CASE("unused leaves yield zero gradients; used leaves all-ones") {
  Tape tape;
  auto a = tape.leaf(1, 2, {1, 2});
  auto b = tape.leaf(1, 2, {3, 4});
  auto unused = tape.leaf(1, 2, {5, 6});
  tape.backward(tape.sum(tape.add(a, b)));
  auto grads = tape.input_gradients({a, b, unused});
  CHECK(grads[0] == std::vector<double>{1.0, 1.0});
  CHECK(grads[1] == std::vector<double>{1.0, 1.0});
  CHECK(grads[2] == std::vector<double>{0.0, 0.0});
}

TEST_CASE("gradients accumulate across fan-out") {
  Tape tape;
  auto x = tape.leaf(1, 2, {1.0, 2.0});
  auto loss = tape.add(tape.sum(x), tape.sum(tape.mul(x, x)));
  tape.backward(loss);
  CHECK(x->grad[0] == 3.0);  // 1 + 2x
  CHECK(x->grad[1] == 5.0);
}

TEST_CASE("dropout: rate bounds, eval identity, inverted scaling, gradient") {
  std::mt19937_64 rng(3);
  Tape tape;
  auto x = tape.leaf(4, 8, std::vector<double>(32, 2.0));
  CHECK_THROWS_AS(tape.dropout(x, 1.0, rng), Error);
  CHECK_THROWS_AS(tape.dropout(x, -0.1, rng), Error);
  CHECK(tape.dropout(x, 0.5, rng, /*train_mode=*/false) == x);

  auto y = tape.dropout(x, 0.25, rng, true);
  long kept = 0;
  for (double v : y->values) {
    const bool zero = v == 0.0;
    const bool scaled = std::abs(v - 2.0 / 0.75) < 1e-15;
    CHECK((zero || scaled));
    if (!zero) ++kept;
  }
  CHECK(kept > 0);
  tape.backward(tape.sum(y));
  for (size_t i = 0; i < x->grad.size(); ++i) {
    if (y->values[i] == 0.0)
      CHECK(x->grad[i] == 0.0);
    else
      CHECK(std::abs(x->grad[i] - 1.0 / 0.75) < 1e-15);
  }
}

TEST_CASE("concat and slice round out the fused-gate plumbing") {
  Tape tape;
  auto a = tape.leaf(2, 2, {1, 2, 3, 4});
  auto b = tape.leaf(2, 1, {5, 6});
  auto c = tape.concat(a, b);
  CHECK(c->values == std::vector<double>{1, 2, 5, 3, 4, 6});
  auto s = tape.slice_cols(c, 1, 3);
  CHECK(s->values == std::vector<double>{2, 5, 4, 6});
  tape.backward(tape.sum(s));
  CHECK(a->grad == std::vector<double>{0, 1, 0, 1});
  CHECK(b->grad == std::vector<double>{1, 1});
}

TEST_CASE("linearity: backward of a*l1 + b*l2 equals a*g1 + b*g2") {
  std::mt19937_64 rng(11);
  auto xv = random_values(6, rng);
  auto grad_of = [&](double a, double b) {
    Tape tape;
    auto x = tape.leaf(2, 3, xv);
    auto l1 = tape.sum(tape.mul(x, x));
    auto l2 = tape.sum(tape.sigmoid(x));
    tape.backward(tape.add(tape.scale(l1, a), tape.scale(l2, b)));
    return x->grad;
  };
  auto g1 = grad_of(1.0, 0.0);
  auto g2 = grad_of(0.0, 1.0);
  auto mixed = grad_of(0.5, 2.0);
  for (size_t i = 0; i < mixed.size(); ++i)
    CHECK(mixed[i] ==
          doctest::Approx(0.5 * g1[i] + 2.0 * g2[i]).epsilon(1e-14));
}

TEST_CASE("random two-step LSTM gradients match central finite differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    testutil::LossEnv env;
    env.params = testutil::random_model(Task::kClassify, 12, 4, 6, 5, 3, seed);
    std::mt19937_64 rng(seed + 100);
    env.examples = {testutil::random_example(Task::kClassify, 12, 2, 3, rng)};
    env.init_addend();
    auto report = testutil::check_gradients(env);
    CHECK(report.checked > 0);
    CHECK(report.max_rel_err <= 1e-6);
  }
}

TEST_CASE("single-token NLL input gradient matches finite differences") {
  testutil::LossEnv env;
  env.params = testutil::random_model(Task::kClassify, 8, 4, 5, 4, 2, 42);
  std::mt19937_64 rng(43);
  env.examples = {testutil::random_example(Task::kClassify, 8, 1, 2, rng)};
  env.init_addend();
  auto report = testutil::check_gradients(env);
  CHECK(report.max_rel_err <= 1e-6);
}

TEST_CASE("determinism: identical seeds give bit-identical values and grads") {
  auto run = [] {
    std::mt19937_64 rng(5);
    auto params = testutil::random_model(Task::kClassify, 10, 4, 6, 4, 2, 5);
    auto example = testutil::random_example(Task::kClassify, 10, 4, 2, rng);
    Tape tape;
    Batch b = make_batch({&example}, Task::kClassify);
    auto eb = embed_batch(tape, params, b, 0.3, &rng);
    auto trace = forward_with_field(tape, params, eb, b);
    auto loss = nll_loss(tape, trace, b.labels, b.mask);
    tape.backward(loss);
    return std::make_pair(loss->scalar(), params.embedding.rows->grad_or_zero());
  };
  auto [l1, g1] = run();
  auto [l2, g2] = run();
  CHECK(l1 == l2);
  CHECK(g1 == g2);
}

TEST_CASE("values stay finite through long forward-backward chains") {
  std::mt19937_64 rng(9);
  auto params = testutil::random_model(Task::kClassify, 20, 6, 8, 6, 2, 9);
  auto example = testutil::random_example(Task::kClassify, 20, 30, 2, rng);
  Tape tape;
  Batch b = make_batch({&example}, Task::kClassify);
  auto eb = embed_batch(tape, params, b, 0.0, nullptr);
  auto trace = forward_with_field(tape, params, eb, b);
  auto loss = nll_loss(tape, trace, b.labels, b.mask);
  tape.backward(loss);
  CHECK(all_finite(trace.logp[0]->values));
  CHECK(all_finite(params.embedding.rows->grad_or_zero()));
  CHECK(std::isfinite(loss->scalar()));
}

TEST_SUITE_END();
