#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ntmm/adam.hpp"
#include "ntmm/gradcheck.hpp"
#include "ntmm/params.hpp"
#include "ntmm/rng.hpp"
#include "ntmm/tape.hpp"
#include "ntmm/tensor.hpp"

using namespace ntmm;

TEST_CASE("tensor shape/data consistency") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("matmul shapes and values") {
  Tape tape;
  auto a = tape.constant(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  auto b = tape.constant(Tensor({3, 1}, {1, 1, 1}));
  auto c = tape.matmul(a, b);
  CHECK(tape.value(c).shape() == std::vector<int>{2, 1});
  CHECK(tape.value(c).at(0, 0) == 6.0);
  CHECK(tape.value(c).at(1, 0) == 15.0);

  auto bad = tape.constant(Tensor({2, 2}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, bad), doctest::Contains("inner dims disagree"), std::invalid_argument);
}

TEST_CASE("softmax of zeros is uniform") {
  Tape tape;
  auto p = tape.softmax_rows(tape.constant(Tensor({1, 3}, {0, 0, 0})));
  for (int j = 0; j < 3; ++j) CHECK(tape.value(p).at(0, j) == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("softmax of log-integers recovers the normalized integers") {
  // exp(ln k) = k, so softmax([ln1, ln2, ln3]) = [1/6, 2/6, 3/6].
  Tape tape;
  auto p = tape.softmax_rows(tape.constant(Tensor({1, 3}, {std::log(1.0), std::log(2.0), std::log(3.0)})));
  CHECK(tape.value(p).at(0, 0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(tape.value(p).at(0, 1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
  CHECK(tape.value(p).at(0, 2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax rows are distributions on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x({4, 7});
    for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian(0.0, 5.0);
    Tape tape;
    const Tensor& p = tape.value(tape.softmax_rows(tape.constant(x)));
    for (int i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (int j = 0; j < 7; ++j) {
        CHECK(p.at(i, j) >= 0.0);
        sum += p.at(i, j);
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
  }
}

TEST_CASE("backward of sum(W x) broadcasts x into grad(W)") {
  Tape tape;
  auto w = tape.leaf(Tensor({2, 3}, {0.5, -1, 2, 3, 0, 1}));
  auto x = tape.constant(Tensor({3, 1}, {2, -3, 5}));
  auto loss = tape.sum(tape.matmul(w, x));
  tape.backward(loss);
  const Tensor& g = tape.grad(w);
  for (int i = 0; i < 2; ++i) {
    CHECK(g.at(i, 0) == 2.0);
    CHECK(g.at(i, 1) == -3.0);
    CHECK(g.at(i, 2) == 5.0);
  }
}

TEST_CASE("backward of squared norm gives 2z") {
  Tape tape;
  auto z = tape.leaf(Tensor({1, 4}, {1, -2, 3, 0.5}));
  auto loss = tape.sum(tape.mul(z, z));
  tape.backward(loss);
  for (int j = 0; j < 4; ++j) CHECK(tape.grad(z).at(0, j) == doctest::Approx(2.0 * tape.value(z).at(0, j)));
}

TEST_CASE("backward rejects non-scalar loss") {
  Tape tape;
  auto z = tape.leaf(Tensor({1, 4}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(tape.backward(z), std::invalid_argument);
}

TEST_CASE("one gradient per bound parameter, shapes matching") {
  ParamStore store;
  store["a"] = Tensor({2, 2}, {1, 2, 3, 4});
  store["b"] = Tensor({2});  // untouched by the loss
  Tape tape;
  ParamBinding bind(tape, store);
  auto loss = tape.sum(bind("a"));
  bind("b");
  tape.backward(loss);
  GradMap grads = bind.grads();
  CHECK(grads.size() == 2);
  CHECK(grads.at("a").same_shape(store.at("a")));
  CHECK(grads.at("b").same_shape(store.at("b")));
  for (std::int64_t i = 0; i < 2; ++i) CHECK(grads.at("b").data()[i] == 0.0);
}

namespace {

// Exercises one op pipeline against central differences.
void check_op_gradients(const char* what, const std::function<Tape::NodeId(Tape&, ParamBinding&)>& build,
                        ParamStore params, double tol = 2e-6) {
  auto loss_fn = [&](const ParamStore& p) {
    Tape tape;
    ParamBinding bind(tape, p);
    return tape.value(build(tape, bind)).item();
  };
  auto grad_fn = [&](const ParamStore& p) {
    Tape tape;
    ParamBinding bind(tape, p);
    tape.backward(build(tape, bind));
    return bind.grads();
  };
  const GradCheckResult res = finite_diff_check(loss_fn, grad_fn, params, 1e-6, tol);
  INFO(what, ": max rel err ", res.max_rel_err, " at ", res.worst_location, " ", res.failure);
  CHECK(res.pass);
}

ParamStore one_param(const std::string& name, std::vector<int> shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.gaussian(0.0, scale);
  ParamStore store;
  store[name] = std::move(t);
  return store;
}

}  // namespace

TEST_CASE("finite differences validate every tape operation") {
  const Tensor other({3, 4}, {0.3, -1.2, 0.8, 0.1, 2.0, -0.5, 0.7, 1.1, -0.9, 0.4, -1.5, 0.6});
  const Tensor square({3, 3}, {0.5, 1.0, -0.3, 0.2, -0.8, 1.2, 0.9, 0.1, -1.1});

  check_op_gradients(
      "matmul-lhs",
      [&](Tape& t, ParamBinding& b) { return t.sum(t.matmul(b("w"), t.constant(Tensor({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8})))); },
      one_param("w", {3, 4}, 1));
  check_op_gradients(
      "matmul_nt-both",
      [&](Tape& t, ParamBinding& b) { return t.sum(t.matmul_nt(b("w"), b("w"))); }, one_param("w", {3, 4}, 2));
  check_op_gradients(
      "add-sub-mul-scale",
      [&](Tape& t, ParamBinding& b) {
        auto w = b("w");
        auto c = t.constant(other);
        return t.sum(t.scale(t.mul(t.sub(t.add(w, c), t.scale(w, 0.3)), w), 1.7));
      },
      one_param("w", {3, 4}, 3));
  check_op_gradients(
      "add_rowvec",
      [&](Tape& t, ParamBinding& b) { return t.sum(t.mul(t.add_rowvec(t.constant(other), b("bias")), t.constant(other))); },
      one_param("bias", {4}, 4));
  check_op_gradients(
      "relu",
      [&](Tape& t, ParamBinding& b) { return t.sum(t.mul(t.relu(b("w")), t.constant(other))); },
      one_param("w", {3, 4}, 5));
  check_op_gradients(
      "rownorm",
      [&](Tape& t, ParamBinding& b) { return t.sum(t.mul(t.rownorm(b("w")), t.constant(other))); },
      one_param("w", {3, 4}, 6));
  check_op_gradients(
      "softmax+ce_rows_const",
      [&](Tape& t, ParamBinding& b) {
        Tensor targets({3, 4}, {0.2, 0.3, 0.4, 0.1, 1, 0, 0, 0, 0.25, 0.25, 0.25, 0.25});
        return t.mean(t.ce_rows_const(t.softmax_rows(b("w")), targets));
      },
      one_param("w", {3, 4}, 7));
  check_op_gradients(
      "logsumexp+diag+transpose+concat",
      [&](Tape& t, ParamBinding& b) {
        auto w = b("w");
        auto m = t.concat_cols(w, t.transpose(w));
        return t.sub(t.mean(t.logsumexp_rows(m)), t.mean(t.diag(w)));
      },
      one_param("w", {3, 3}, 8));
  check_op_gradients(
      "ce_rows_labels",
      [&](Tape& t, ParamBinding& b) { return t.mean(t.ce_rows_labels(b("w"), {2, 0, 1})); },
      one_param("w", {3, 4}, 9, 2.0));
  check_op_gradients(
      "dot_const+mean",
      [&](Tape& t, ParamBinding& b) {
        Tensor weights({3}, {0.5, 1.5, -0.7});
        return t.add(t.dot_const(t.logsumexp_rows(b("w")), weights), t.mean(b("w")));
      },
      one_param("w", {3, 3}, 10));
  (void)square;
}

TEST_CASE("adam fixed point under zero gradients") {
  ParamStore params;
  params["p"] = Tensor({2, 2}, {1, 2, 3, 4});
  const Tensor before = params["p"];
  Adam adam;
  GradMap grads;
  grads["p"] = Tensor({2, 2});
  for (int i = 0; i < 5; ++i) adam.step(params, grads);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(params["p"].data()[i] == before.data()[i]);
  CHECK(adam.step_count() == 5);
}

TEST_CASE("adam first step magnitude approximates the learning rate") {
  ParamStore params;
  params["p"] = Tensor::scalar(0.0);
  AdamConfig cfg;  // defaults: lr 5e-5, beta1 0.9, beta2 0.999, eps 1e-8
  CHECK(cfg.lr == 5e-5);
  CHECK(cfg.beta1 == 0.9);
  CHECK(cfg.beta2 == 0.999);
  CHECK(cfg.eps == 1e-8);
  Adam adam(cfg);
  GradMap grads;
  grads["p"] = Tensor::scalar(1.0);
  adam.step(params, grads);
  // mhat = vhat = 1 on step one, so the update is lr/(1 + eps).
  CHECK(std::abs(params["p"].item() + cfg.lr) <= 2e-8 * cfg.lr);
}

TEST_CASE("adam rejects non-finite gradients naming the parameter") {
  ParamStore params;
  params["bad_param"] = Tensor::scalar(1.0);
  Adam adam;
  GradMap grads;
  grads["bad_param"] = Tensor::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(adam.step(params, grads), doctest::Contains("bad_param"), std::runtime_error);
}

TEST_CASE("adam moment buffers follow parameter shapes") {
  ParamStore params;
  params["w"] = Tensor({3, 2});
  Adam adam;
  GradMap grads;
  grads["w"] = Tensor({2, 3});
  CHECK_THROWS_AS(adam.step(params, grads), std::invalid_argument);
}

TEST_CASE("finite_diff_check accepts a quadratic") {
  ParamStore params;
  params["p"] = Tensor({3}, {1.0, -0.5, 2.0});
  const Tensor target({3}, {0.2, 0.4, -1.0});
  auto loss = [&](const ParamStore& p) {
    double s = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double d = p.at("p").data()[i] - target.data()[i];
      s += d * d;
    }
    return s;
  };
  auto grad = [&](const ParamStore& p) {
    GradMap g;
    g["p"] = Tensor({3});
    for (int i = 0; i < 3; ++i) g["p"].data()[i] = 2.0 * (p.at("p").data()[i] - target.data()[i]);
    return g;
  };
  const GradCheckResult res = finite_diff_check(loss, grad, params, 1e-5, 1e-6);
  CHECK(res.pass);
}

TEST_CASE("finite_diff_check flags a corrupted gradient") {
  ParamStore params;
  params["p"] = Tensor({2}, {1.0, 2.0});
  auto loss = [](const ParamStore& p) {
    return p.at("p").data()[0] * p.at("p").data()[0] + p.at("p").data()[1];
  };
  auto grad = [](const ParamStore& p) {
    GradMap g;
    g["p"] = Tensor({2});
    g["p"].data()[0] = 2.0 * p.at("p").data()[0] + 0.5;  // corrupted
    g["p"].data()[1] = 1.0;
    return g;
  };
  const GradCheckResult res = finite_diff_check(loss, grad, params, 1e-5, 1e-4);
  CHECK_FALSE(res.pass);
  CHECK(res.worst_location == "p[0]");
}

TEST_CASE("finite_diff_check reports non-finite probes with location") {
  ParamStore params;
  params["p"] = Tensor({1}, {1e-7});
  auto loss = [](const ParamStore& p) { return std::sqrt(p.at("p").data()[0]); };
  auto grad = [](const ParamStore& p) {
    GradMap g;
    g["p"] = Tensor({1}, {0.5 / std::sqrt(p.at("p").data()[0])});
    return g;
  };
  const GradCheckResult res = finite_diff_check(loss, grad, params, 1e-5, 1e-4);
  CHECK_FALSE(res.pass);
  CHECK(res.failure.find("p[0]") != std::string::npos);
}

TEST_CASE("operations are deterministic") {
  Rng rng(99);
  Tensor x({5, 6});
  for (std::int64_t i = 0; i < x.size(); ++i) x.data()[i] = rng.gaussian();
  auto run = [&] {
    Tape tape;
    auto a = tape.constant(x);
    return tape.value(tape.mean(tape.logsumexp_rows(tape.softmax_rows(tape.matmul_nt(a, a))))).item();
  };
  CHECK(run() == run());
}
