#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "pfi/errors.hpp"
#include "pfi/optim.hpp"
#include "pfi/rng.hpp"
#include "pfi/tensor.hpp"

using namespace pfi;

namespace {

// Test-local central-difference oracle, independent of grad_check.
// Evaluates fn with no-grad tapes and perturbs one coordinate at a time.
double finite_diff_max_error(const std::function<Tensor(Tape&)>& fn,
                             std::vector<Tensor>& params, double eps) {
  Tape tape;
  Tensor loss = fn(tape);
  tape.backward(loss);
  double worst = 0.0;
  for (Tensor& p : params) {
    for (int64_t i = 0; i < p.size(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + eps;
      Tape tp(Tape::Mode::kNoGrad);
      const double fp = fn(tp).item();
      p.data()[i] = keep - eps;
      Tape tm(Tape::Mode::kNoGrad);
      const double fm = fn(tm).item();
      p.data()[i] = keep;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double analytic = p.grad()[static_cast<size_t>(i)];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = true) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (double& v : t.values()) v = rng.normal(0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("backward on sum gives ones") {
  Tensor x = Tensor::from_values({3}, {1.5, -2.0, 0.25}, true);
  Tape tape;
  Tensor loss = sum_all(tape, x);
  tape.backward(loss);
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("backward on dot square gives 2x") {
  Tensor x = Tensor::from_values({1, 1}, {2.0}, true);
  Tape tape;
  Tensor sq = mul(tape, x, x);
  Tensor loss = sum_all(tape, sq);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from_values({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = scale(tape, x, 2.0);
  CHECK_THROWS_AS(tape.backward(y), ContractViolation);
}

TEST_CASE("backward is deterministic") {
  Rng rng(7);
  Tensor a = random_tensor({4, 3}, rng);
  Tensor b = random_tensor({3, 5}, rng);
  auto run = [&](std::vector<double>& ga, std::vector<double>& gb) {
    a.zero_grad();
    b.zero_grad();
    Tape tape;
    Tensor y = relu(tape, matmul(tape, a, b));
    Tensor loss = mean_all(tape, mul(tape, y, y));
    tape.backward(loss);
    ga.assign(a.grad().begin(), a.grad().end());
    gb.assign(b.grad().begin(), b.grad().end());
  };
  std::vector<double> ga1, gb1, ga2, gb2;
  run(ga1, gb1);
  run(ga2, gb2);
  CHECK(ga1 == ga2);  // bitwise
  CHECK(gb1 == gb2);
}

TEST_CASE("two-layer MLP gradients match finite differences") {
  Rng rng(42);
  Tensor x = random_tensor({2, 4}, rng, false);
  Tensor w1 = random_tensor({4, 8}, rng);
  Tensor b1 = random_tensor({8}, rng);
  Tensor w2 = random_tensor({8, 3}, rng);
  Tensor b2 = random_tensor({3}, rng);
  std::vector<Tensor> params{w1, b1, w2, b2};
  auto fn = [&](Tape& tape) {
    Tensor h = relu(tape, add_row_broadcast(tape, matmul(tape, x, w1), b1));
    Tensor y = add_row_broadcast(tape, matmul(tape, h, w2), b2);
    Tensor sm = softmax_rows(tape, y);
    return mean_all(tape, mul(tape, sm, sm));
  };
  CHECK(finite_diff_max_error(fn, params, 1e-5) < 1e-4);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({5, 9}, rng, false);
    for (double& v : x.values()) v *= 10.0;
    Tape tape(Tape::Mode::kNoGrad);
    Tensor y = softmax_rows(tape, x);
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 9; ++j) s += y.data()[i * 9 + j];
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("layer norm and attention-style ops pass finite differences") {
  Rng rng(11);
  Tensor x = random_tensor({3, 6}, rng);
  Tensor g = random_tensor({6}, rng);
  Tensor b = random_tensor({6}, rng);
  Tensor k = random_tensor({4, 6}, rng);
  std::vector<Tensor> params{x, g, b, k};
  auto fn = [&](Tape& tape) {
    Tensor n = layer_norm_rows(tape, x, g, b);
    Tensor scores = softmax_rows(tape, matmul_bt(tape, n, k));
    Tensor parts_a = slice_cols(tape, scores, 0, 2);
    Tensor parts_b = slice_cols(tape, scores, 2, 4);
    Tensor back = concat_cols(tape, {parts_b, parts_a});
    return mean_all(tape, mul(tape, back, back));
  };
  CHECK(finite_diff_max_error(fn, params, 1e-5) < 1e-4);
}

TEST_CASE("embedding lookup routes gradients to the right rows") {
  Tensor table = Tensor::from_values({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tape tape;
  Tensor out = embedding_lookup(tape, table, {2, 0, 2});
  Tensor loss = sum_all(tape, out);
  tape.backward(loss);
  auto g = table.grad();
  CHECK(g[0] == doctest::Approx(1.0));  // row 0 used once
  CHECK(g[2] == doctest::Approx(0.0));  // row 1 unused
  CHECK(g[4] == doctest::Approx(2.0));  // row 2 used twice
}

TEST_CASE("cross entropy matches log softmax by hand") {
  Tensor logits = Tensor::from_values({2, 3}, {1.0, 2.0, 3.0, 0.0, 0.0, 0.0}, true);
  Tape tape;
  Tensor loss = cross_entropy_mean(tape, logits, {2, 1});
  const double lse1 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  const double expected = ((lse1 - 3.0) + std::log(3.0)) / 2.0;
  CHECK(loss.item() == doctest::Approx(expected).epsilon(1e-12));
  std::vector<Tensor> params{logits};
  auto fn = [&](Tape& t) { return cross_entropy_mean(t, logits, {2, 1}); };
  CHECK(finite_diff_max_error(fn, params, 1e-6) < 1e-6);
}

TEST_CASE("cross entropy rejects empty targets") {
  Tensor logits = Tensor::zeros({1, 4});
  Tape tape;
  CHECK_THROWS_AS(cross_entropy_mean(tape, logits, {}), ContractViolation);
}

TEST_CASE("kl divergence of identical logits is zero") {
  Rng rng(5);
  Tensor p = random_tensor({4, 7}, rng, false);
  Tape tape(Tape::Mode::kNoGrad);
  CHECK(kl_divergence(tape, p, p.clone()).item() == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("kl divergence matches direct summation on two classes") {
  const double ln2 = std::log(2.0);
  Tensor p = Tensor::from_values({1, 2}, {ln2, 0.0});
  Tensor q = Tensor::from_values({1, 2}, {0.0, ln2});
  Tape tape(Tape::Mode::kNoGrad);
  const double got = kl_divergence(tape, p, q).item();
  // direct summation oracle over softmax values
  const double ps[2] = {2.0 / 3.0, 1.0 / 3.0};
  const double qs[2] = {1.0 / 3.0, 2.0 / 3.0};
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) expected += ps[i] * std::log(ps[i] / qs[i]);
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
  CHECK(got == doctest::Approx(ln2 / 3.0).epsilon(1e-12));
}

TEST_CASE("kl divergence is non-negative on random logit pairs") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    Tensor p = random_tensor({1, 6}, rng, false);
    Tensor q = random_tensor({1, 6}, rng, false);
    Tape tape(Tape::Mode::kNoGrad);
    CHECK(kl_divergence(tape, p, q).item() >= -1e-12);
  }
}

TEST_CASE("kl divergence gradient flows to q") {
  Rng rng(23);
  Tensor p = random_tensor({3, 5}, rng, false);
  Tensor q = random_tensor({3, 5}, rng);
  std::vector<Tensor> params{q};
  auto fn = [&](Tape& t) { return kl_divergence(t, p, q); };
  CHECK(finite_diff_max_error(fn, params, 1e-6) < 1e-6);
}

TEST_CASE("kl divergence gradient flows to p when required") {
  Rng rng(29);
  Tensor p = random_tensor({2, 4}, rng);
  Tensor q = random_tensor({2, 4}, rng, false);
  std::vector<Tensor> params{p};
  auto fn = [&](Tape& t) { return kl_divergence(t, p, q); };
  CHECK(finite_diff_max_error(fn, params, 1e-6) < 1e-6);
}

TEST_CASE("kl divergence rejects shape mismatch") {
  Tensor p = Tensor::zeros({2, 3});
  Tensor q = Tensor::zeros({3, 2});
  Tape tape;
  CHECK_THROWS_AS(kl_divergence(tape, p, q), ContractViolation);
}

TEST_CASE("adam with zero gradients is a no-op on parameters") {
  ParamMap params;
  params["w"] = Tensor::from_values({2}, {1.25, -3.5}, true);
  params["w"].zero_grad();  // allocate zero grads
  AdamState state;
  state.learning_rate = 1e-4;
  adam_step(params, state);
  CHECK(params["w"].data()[0] == 1.25);
  CHECK(params["w"].data()[1] == -3.5);
  CHECK(state.step_count == 1);
}

TEST_CASE("adam first step matches the hand-applied update") {
  ParamMap params;
  params["w"] = Tensor::from_values({1}, {1.0}, true);
  params["w"].grad()[0] = 1.0;
  AdamState state;
  state.learning_rate = 1e-4;
  adam_step(params, state);
  // m-hat = v-hat = 1 after bias correction, so the step is lr / (1 + eps).
  const double expected = 1.0 - 1e-4 / (1.0 + 1e-8);
  CHECK(params["w"].data()[0] == doctest::Approx(expected).epsilon(1e-15));
}

TEST_CASE("adam treats identical parameters identically") {
  ParamMap params;
  params["a"] = Tensor::from_values({2}, {0.5, 0.5}, true);
  params["b"] = Tensor::from_values({2}, {0.5, 0.5}, true);
  AdamState state;
  state.learning_rate = 1e-3;
  Rng rng(9);
  for (int step = 0; step < 5; ++step) {
    const double g = rng.normal(0.0, 1.0);
    for (auto& [name, p] : params) {
      p.zero_grad();
      p.grad()[0] = g;
      p.grad()[1] = g;
    }
    adam_step(params, state);
  }
  CHECK(params["a"].data()[0] == params["b"].data()[0]);
  CHECK(params["a"].data()[0] == params["a"].data()[1]);
}

TEST_CASE("adam rejects moment shape drift") {
  ParamMap params;
  params["w"] = Tensor::from_values({2}, {0.0, 0.0}, true);
  params["w"].zero_grad();
  AdamState state;
  adam_step(params, state);
  params["w"] = Tensor::from_values({3}, {0.0, 0.0, 0.0}, true);
  params["w"].zero_grad();
  CHECK_THROWS_AS(adam_step(params, state), ContractViolation);
}

TEST_CASE("grad_check on sum of squares is tight") {
  ParamMap params;
  Rng rng(31);
  Tensor x = Tensor::zeros({6}, true);
  for (double& v : x.values()) v = rng.normal(0.0, 1.0);
  params["x"] = x;
  auto fn = [&params](Tape& tape) {
    Tensor p = params["x"];
    return sum_all(tape, mul(tape, p, p));
  };
  CHECK(grad_check(fn, params, 1e-5) < 1e-8);
}

TEST_CASE("grad_check on softmax cross entropy") {
  ParamMap params;
  Rng rng(37);
  Tensor logits = Tensor::zeros({4, 9}, true);
  for (double& v : logits.values()) v = rng.normal(0.0, 1.0);
  params["logits"] = logits;
  std::vector<int> targets{1, 0, 8, 4};
  auto fn = [&params, &targets](Tape& tape) {
    return cross_entropy_mean(tape, params["logits"], targets);
  };
  CHECK(grad_check(fn, params, 1e-5) < 1e-5);
}

TEST_CASE("grad_check rejects non-positive epsilon") {
  ParamMap params;
  params["x"] = Tensor::scalar(1.0, true);
  auto fn = [&params](Tape& tape) { return sum_all(tape, params["x"]); };
  CHECK_THROWS_AS(grad_check(fn, params, 0.0), ContractViolation);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor::from_values({2, 2}, {1.0}), ContractViolation);
  Tensor t = Tensor::zeros({2, 3});
  CHECK(t.size() == 6);
  Tensor c = t.clone();
  CHECK(!c.same_storage(t));
  CHECK(c.checksum() == t.checksum());
  c.data()[0] = 1.0;
  CHECK(c.checksum() != t.checksum());
  CHECK(all_finite(t));
  t.data()[3] = std::numeric_limits<double>::infinity();
  CHECK(!all_finite(t));
}
