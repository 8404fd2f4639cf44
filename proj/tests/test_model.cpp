#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "ntmm/adam.hpp"
#include "ntmm/gradcheck.hpp"
#include "ntmm/model.hpp"

using namespace ntmm;
namespace fs = std::filesystem;

namespace {

ModelDims toy_dims() {
  ModelDims dims;
  dims.d_v = 4;
  dims.d_a = 3;
  dims.d = 2;
  dims.enc_hidden = 5;
  dims.clf_hidden = 2;
  dims.K = 3;
  dims.ae_input = 4;
  dims.ae_hidden = 2;
  return dims;
}

void zero_params(ModelState& m, const std::string& prefix) {
  for (auto& [name, t] : m.params())
    if (name.rfind(prefix, 0) == 0) t.fill(0.0);
}

}  // namespace

TEST_CASE("encode with zero weights gives zero features") {
  ModelState m = ModelState::init(toy_dims(), 1);
  zero_params(m, "enc_v.");
  const Tensor z = m.encode(Modality::kVisual, Tensor({2, 4}, {1, 2, 3, 4, -1, -2, -3, -4}));
  for (std::int64_t i = 0; i < z.size(); ++i) CHECK(z.data()[i] == 0.0);
}

TEST_CASE("identity-initialized encoder is ReLU") {
  ModelDims dims = toy_dims();
  dims.d_v = 3;
  dims.d = 3;
  dims.enc_hidden = 3;
  ModelState m = ModelState::init(dims, 1);
  zero_params(m, "enc_v.");
  for (int i = 0; i < 3; ++i) {
    m.params()["enc_v.W1"].at(i, i) = 1.0;
    m.params()["enc_v.W2"].at(i, i) = 1.0;
  }
  const Tensor z = m.encode(Modality::kVisual, Tensor({2, 3}, {1.5, -2.0, 0.25, -1.0, 3.0, 0.0}));
  CHECK(z.at(0, 0) == 1.5);
  CHECK(z.at(0, 1) == 0.0);
  CHECK(z.at(0, 2) == 0.25);
  CHECK(z.at(1, 0) == 0.0);
  CHECK(z.at(1, 1) == 3.0);
  CHECK(z.at(1, 2) == 0.0);
}

TEST_CASE("encode preserves batch order and checks dims") {
  ModelState m = ModelState::init(toy_dims(), 3);
  Tensor batch({5, 4});
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) batch.at(i, j) = i + 0.1 * j;
  const Tensor z = m.encode(Modality::kVisual, batch);
  CHECK(z.rows() == 5);
  CHECK(z.cols() == 2);
  for (int i = 0; i < 5; ++i) {
    Tensor row({1, 4});
    for (int j = 0; j < 4; ++j) row.at(0, j) = batch.at(i, j);
    const Tensor zi = m.encode(Modality::kVisual, row);
    CHECK(zi.at(0, 0) == z.at(i, 0));
    CHECK(zi.at(0, 1) == z.at(i, 1));
  }
  CHECK_THROWS_AS(m.encode(Modality::kAudio, batch), std::invalid_argument);  // audio expects d_a = 3
}

TEST_CASE("classifier with zero weights is uniform, and fusion order matters") {
  ModelState m = ModelState::init(toy_dims(), 4);
  const Tensor z_v({1, 2}, {0.3, -0.8});
  const Tensor z_a({1, 2}, {1.2, 0.4});
  {
    ModelState zeroed = m;
    zero_params(zeroed, "clf.");
    const Tensor logits = zeroed.classify(z_v, z_a);
    for (int j = 0; j < 3; ++j) CHECK(logits.at(0, j) == 0.0);
  }
  const Tensor ab = m.classify(z_v, z_a);
  const Tensor ba = m.classify(z_a, z_v);
  bool any_different = false;
  for (int j = 0; j < 3; ++j) any_different = any_different || ab.at(0, j) != ba.at(0, j);
  CHECK(any_different);
}

TEST_CASE("classifier matches hand-computed logits on a 3-class toy") {
  ModelDims dims = toy_dims();
  dims.clf_hidden = 2;
  ModelState m = ModelState::init(dims, 5);
  zero_params(m, "clf.");
  // W1 routes (z_v + z_a) per coordinate; one ReLU then the output layer.
  m.params()["clf.W1"] = Tensor({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1});
  m.params()["clf.b1"] = Tensor({2}, {0.5, -0.5});
  m.params()["clf.W2"] = Tensor({2, 3}, {1, 2, 3, 4, 5, 6});
  m.params()["clf.b2"] = Tensor({3}, {0.1, 0.2, 0.3});
  const Tensor logits = m.classify(Tensor({1, 2}, {1, 2}), Tensor({1, 2}, {3, -1}));
  // hidden = relu([1+3, 2-1] + [0.5, -0.5]) = [4.5, 0.5]
  // logits = [4.5 + 2, 9 + 2.5, 13.5 + 3] + [0.1, 0.2, 0.3]
  CHECK(logits.at(0, 0) == doctest::Approx(6.6).epsilon(1e-12));
  CHECK(logits.at(0, 1) == doctest::Approx(11.7).epsilon(1e-12));
  CHECK(logits.at(0, 2) == doctest::Approx(16.8).epsilon(1e-12));
}

TEST_CASE("prototype normalization scales to unit norm and is idempotent") {
  Rng rng(9);
  Tensor bank({2, 2}, {3, 4, 1, 0});
  CHECK(normalize_prototype_bank(bank, rng) == 0);
  CHECK(bank.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(bank.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(bank.at(1, 0) == 1.0);
  const Tensor once = bank;
  normalize_prototype_bank(bank, rng);
  for (std::int64_t i = 0; i < bank.size(); ++i) CHECK(bank.data()[i] == once.data()[i]);
}

TEST_CASE("zero prototype is re-initialized to a random unit vector") {
  Rng rng(10);
  Tensor bank({3, 4});
  bank.at(0, 0) = 2.0;  // rows 1 and 2 stay zero
  CHECK(normalize_prototype_bank(bank, rng) == 2);
  for (int i = 0; i < 3; ++i) {
    double norm = 0.0;
    for (int j = 0; j < 4; ++j) norm += bank.at(i, j) * bank.at(i, j);
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("positive pre-normalization scaling cannot change prototype argmax") {
  Rng rng(11);
  Tensor a({4, 6});
  for (std::int64_t i = 0; i < a.size(); ++i) a.data()[i] = rng.gaussian();
  Tensor b = a;
  for (int j = 0; j < 6; ++j) b.at(2, j) *= 5.0;  // rescale one prototype
  normalize_prototype_bank(a, rng);
  normalize_prototype_bank(b, rng);
  Tensor query({6});
  for (int j = 0; j < 6; ++j) query.data()[j] = rng.gaussian();
  auto argmax_against = [&](const Tensor& bank) {
    int best = 0;
    double best_dot = -1e30;
    for (int i = 0; i < 4; ++i) {
      double dot = 0.0;
      for (int j = 0; j < 6; ++j) dot += bank.at(i, j) * query.data()[j];
      if (dot > best_dot) {
        best_dot = dot;
        best = i;
      }
    }
    return best;
  };
  CHECK(argmax_against(a) == argmax_against(b));
}

TEST_CASE("autoencoder with zero weights reconstructs zero") {
  ModelState m = ModelState::init(toy_dims(), 6);
  zero_params(m, "ae.");
  Tape tape;
  ParamBinding bind(tape, m.params());
  const Tensor p({3, 4}, {0.1, 0.2, 0.3, 0.4, 0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25});
  const auto [hidden, recon] = m.autoencode(tape, bind, tape.constant(p));
  (void)hidden;
  for (std::int64_t i = 0; i < tape.value(recon).size(); ++i) CHECK(tape.value(recon).data()[i] == 0.0);
}

TEST_CASE("identity-weight autoencoder is an isometry on nonnegative input") {
  ModelDims dims = toy_dims();
  dims.ae_input = 4;
  dims.ae_hidden = 4;  // full width; identity W has orthonormal columns
  ModelState m = ModelState::init(dims, 7);
  zero_params(m, "ae.");
  for (int i = 0; i < 4; ++i) m.params()["ae.W"].at(i, i) = 1.0;
  Tape tape;
  ParamBinding bind(tape, m.params());
  const Tensor p({3, 4}, {0.1, 0.2, 0.3, 0.4, 0.4, 0.3, 0.2, 0.1, 0.25, 0.25, 0.25, 0.25});
  const auto [hidden, recon] = m.autoencode(tape, bind, tape.constant(p));
  (void)hidden;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) CHECK(tape.value(recon).at(i, j) == doctest::Approx(p.at(i, j)).epsilon(1e-12));
}

TEST_CASE("autoencoder rejects width mismatch") {
  ModelState m = ModelState::init(toy_dims(), 8);
  Tape tape;
  ParamBinding bind(tape, m.params());
  CHECK_THROWS_AS(m.autoencode(tape, bind, tape.constant(Tensor({3, 5}))), std::invalid_argument);
}

TEST_CASE("bottleneck reconstruction error is positive and shrinks under training") {
  ModelDims dims = toy_dims();
  dims.ae_input = 8;
  dims.ae_hidden = 4;
  ModelState m = ModelState::init(dims, 9);
  Rng rng(12);
  Tensor p({6, 8});
  for (std::int64_t i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform01();

  auto loss_and_grads = [&](bool want_grads) {
    Tape tape;
    ParamBinding bind(tape, m.params());
    const auto [hidden, recon] = m.autoencode(tape, bind, tape.constant(p));
    (void)hidden;
    const auto diff = tape.sub(tape.constant(p), recon);
    const auto loss = tape.sum(tape.mul(diff, diff));
    const double value = tape.value(loss).item();
    GradMap grads;
    if (want_grads) {
      tape.backward(loss);
      for (auto& [name, g] : bind.grads())
        if (name.rfind("ae.", 0) == 0) grads.emplace(name, g);
    }
    return std::pair<double, GradMap>(value, std::move(grads));
  };

  const double initial = loss_and_grads(false).first;
  CHECK(initial > 0.0);
  Adam adam(AdamConfig{1e-2, 0.9, 0.999, 1e-8});
  double final_loss = initial;
  for (int step = 0; step < 200; ++step) {
    auto [value, grads] = loss_and_grads(true);
    adam.step(m.params(), grads);
    final_loss = value;
  }
  CHECK(final_loss > 0.0);  // bottleneck cannot be exact
  CHECK(final_loss < 0.5 * initial);
}

TEST_CASE("tied decoder gradients match finite differences") {
  ModelDims dims = toy_dims();
  ModelState m = ModelState::init(dims, 10);
  Rng rng(13);
  Tensor p({3, 4});
  for (std::int64_t i = 0; i < p.size(); ++i) p.data()[i] = rng.uniform01();

  auto build = [&](Tape& tape, ParamBinding& bind) {
    const auto [hidden, recon] = m.autoencode(tape, bind, tape.constant(p));
    (void)hidden;
    const auto diff = tape.sub(tape.constant(p), recon);
    return tape.sum(tape.mul(diff, diff));
  };
  auto loss_fn = [&](const ParamStore& params) {
    Tape tape;
    ParamBinding bind(tape, params);
    return tape.value(build(tape, bind)).item();
  };
  auto grad_fn = [&](const ParamStore& params) {
    Tape tape;
    ParamBinding bind(tape, params);
    tape.backward(build(tape, bind));
    return bind.grads();
  };
  ParamStore ae_only;
  for (const auto& [name, t] : m.params())
    if (name.rfind("ae.", 0) == 0) ae_only.emplace(name, t);
  const GradCheckResult res = finite_diff_check(loss_fn, grad_fn, ae_only, 1e-5, 1e-6);
  INFO("max rel err ", res.max_rel_err, " at ", res.worst_location);
  CHECK(res.pass);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  const fs::path path = fs::temp_directory_path() / "ntmm_model.ntck";
  ModelState m = ModelState::init(toy_dims(), 11);
  m.save(path);
  const ModelState loaded = ModelState::load(path);
  CHECK(loaded.dims().d_v == m.dims().d_v);
  CHECK(loaded.dims().ae_hidden == m.dims().ae_hidden);
  REQUIRE(loaded.params().size() == m.params().size());
  for (const auto& [name, t] : m.params()) {
    const Tensor& other = loaded.params().at(name);
    REQUIRE(other.same_shape(t));
    for (std::int64_t i = 0; i < t.size(); ++i) CHECK(other.data()[i] == t.data()[i]);
  }
  fs::remove(path);
}

TEST_CASE("model dims validation") {
  ModelDims dims = toy_dims();
  dims.ae_hidden = dims.ae_input + 1;
  CHECK_THROWS_AS(dims.validate(), std::invalid_argument);
  dims = toy_dims();
  dims.K = 1;
  CHECK_THROWS_AS(dims.validate(), std::invalid_argument);
}
