#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mret/autodiff.hpp"
#include "mret/serialize.hpp"
#include "support.hpp"

using namespace mret;
using mret::testing::random_tensor;

namespace {

Tensor mat(std::size_t r, std::size_t c, std::vector<double> v) { return Tensor({r, c}, std::move(v)); }

// Weighted sum with fixed random weights: a scalar probe whose gradient is
// not degenerate for shape-preserving ops like softmax.
Var probe(Tape& tape, const Var& y, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(y, tape.constant(random_tensor(y.shape(), rng))));
}

}  // namespace

TEST_CASE("tensor storage matches its shape") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5, 0.0)), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  CHECK_THROWS_AS(t.reshaped({4, 2}), ShapeError);
}

TEST_CASE("forward_op examples") {
  PrecisionScope f64(Precision::f64);
  Tape tape;

  SUBCASE("matmul with identity-padded right operand selects input columns") {
    Var a = tape.constant(mat(2, 3, {1, 2, 3, 4, 5, 6}));
    Var b = tape.constant(mat(3, 2, {1, 0, 0, 1, 0, 0}));
    Var y = forward_op("matmul", {a, b});
    CHECK(y.value() == mat(2, 2, {1, 2, 4, 5}));
  }
  SUBCASE("softmax of equal logits is uniform") {
    Var y = forward_op("softmax", {tape.constant(Tensor({3}, 0.0))});
    for (double v : y.value().data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("layernorm of a constant row is zero before the affine part") {
    Var x = tape.constant(mat(1, 4, {2.5, 2.5, 2.5, 2.5}));
    Var y = ops::layernorm(x, tape.constant(Tensor({4}, 1.0)), tape.constant(Tensor({4}, 0.0)));
    for (double v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("errors") {
    Var a = tape.constant(mat(2, 3, {1, 2, 3, 4, 5, 6}));
    CHECK_THROWS_AS(forward_op("matmul", {a, a}), ShapeError);
    CHECK_THROWS_AS(forward_op("conv3d", {a}), NumericsError);
    Var big = tape.constant(Tensor({1}, 1e300));
    CHECK_THROWS_AS(forward_op("scale", {big}, {{"factor", 1e300}}), NumericsError);
  }
}

TEST_CASE("backward examples") {
  PrecisionScope f64(Precision::f64);

  SUBCASE("sum gives ones") {
    Tape tape;
    Var x = tape.parameter(Tensor({5}, 0.7), "x");
    auto g = tape.backward(ops::sum(x));
    CHECK(g.at("x") == Tensor({5}, 1.0));
  }
  SUBCASE("hand-expanded chain rule") {
    Tape tape;
    Var w = tape.parameter(Tensor::scalar(1.0), "w");
    Var r = ops::sub(ops::mul(w, tape.constant(Tensor::scalar(2.0))), tape.constant(Tensor::scalar(0.0)));
    auto g = tape.backward(ops::mul(r, r));
    CHECK(g.at("w").item() == 8.0);
  }
  SUBCASE("unused parameters receive zero gradients of their shape") {
    Tape tape;
    Var x = tape.parameter(Tensor({3}, 1.0), "x");
    tape.parameter(Tensor({2, 2}, 1.0), "unused");
    auto g = tape.backward(ops::sum(x));
    CHECK(g.at("unused") == Tensor({2, 2}, 0.0));
  }
  SUBCASE("fan-out accumulates") {
    Tape tape;
    Var x = tape.parameter(Tensor({3}, std::vector<double>{1, -2, 3}), "x");
    auto g = tape.backward(ops::add(ops::sum(ops::mul(x, x)), ops::sum(x)));
    CHECK(g.at("x") == Tensor({3}, std::vector<double>{3, -3, 7}));
  }
  SUBCASE("errors") {
    Tape empty;
    CHECK_THROWS_AS(empty.backward(Var()), NumericsError);
    Tape tape;
    Var x = tape.parameter(Tensor({3}, 1.0), "x");
    CHECK_THROWS_AS(tape.backward(x), ShapeError);
  }
}

TEST_CASE("grad_check examples") {
  SUBCASE("requires f64") {
    PrecisionScope f32(Precision::f32);
    CHECK_THROWS_AS(grad_check([](Tape&, const Var& x) { return ops::sum(x); }, Tensor({2}, 1.0)), NumericsError);
  }
  PrecisionScope f64(Precision::f64);
  Rng rng(11);
  SUBCASE("sum of squares") {
    const double err =
        grad_check([](Tape&, const Var& x) { return ops::sum(ops::mul(x, x)); }, random_tensor({10}, rng));
    CHECK(err < 1e-8);
  }
  SUBCASE("softmax then sum is constant") {
    // The analytic gradient is zero; the finite difference only sees rounding
    // noise, so the error is bounded by that noise over the 1e-8 floor.
    Tape tape;
    Var x = tape.parameter(random_tensor({6}, rng), "x");
    auto g = tape.backward(ops::sum(ops::softmax(x)));
    for (double v : g.at("x").data()) CHECK(std::abs(v) < 1e-15);
    const double err = grad_check([](Tape&, const Var& v) { return ops::sum(ops::softmax(v)); }, random_tensor({6}, rng));
    CHECK(err < 1e-2);
  }
  SUBCASE("one spatial encoder layer") {
    ModelConfig cfg = mret::testing::gradcheck_config();
    cfg.spatial_layers = 1;
    const ModelParams params = mret::testing::spread_params(cfg, 3, 0.3);
    const Tensor z0 = random_tensor({static_cast<std::size_t>(cfg.tokens() + 1), static_cast<std::size_t>(cfg.dim)}, rng);
    const double err = grad_check(
        [&](Tape& tape, const Var& z) {
          ParamVars p(tape, params);
          Var h = spatial_encode(p, z, cfg);
          return ops::sum(ops::mul(h, h));
        },
        z0);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("every primitive matches central differences on 20 random inputs") {
  PrecisionScope f64(Precision::f64);
  Rng rng(2024);
  using Fn = std::function<Var(Tape&, const Var&)>;
  struct Case {
    const char* name;
    Shape shape;
    Fn f;
  };
  const Tensor other = random_tensor({3, 4}, rng);
  const Tensor right = random_tensor({4, 5}, rng);
  const Tensor gamma = random_tensor({4}, rng, 0.5, 1.5);
  const Tensor beta = random_tensor({4}, rng);
  const std::vector<Case> cases = {
      {"matmul", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::matmul(x, t.constant(right)), 1); }},
      {"matmul_bt", {5, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::matmul_bt(t.constant(other), x), 2); }},
      {"add", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::add(x, t.constant(other)), 3); }},
      {"add_row", {4}, [&](Tape& t, const Var& x) { return probe(t, ops::add(t.constant(other), x), 4); }},
      {"sub", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::sub(t.constant(other), x), 5); }},
      {"mul", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::mul(x, x), 6); }},
      {"scale", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::scale(x, -1.7), 7); }},
      {"gelu", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::gelu(x), 8); }},
      {"softmax", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::softmax(x), 9); }},
      {"layernorm", {3, 4},
       [&](Tape& t, const Var& x) { return probe(t, ops::layernorm(x, t.constant(gamma), t.constant(beta)), 10); }},
      {"layernorm_gamma", {4},
       [&](Tape& t, const Var& x) { return probe(t, ops::layernorm(t.constant(other), x, t.constant(beta)), 11); }},
      {"reshape", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::reshape(x, {2, 6}), 12); }},
      {"transpose", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::transpose(x), 13); }},
      {"concat0", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::concat({x, t.constant(other), x}, 0), 14); }},
      {"concat1", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::concat({t.constant(other), x}, 1), 15); }},
      {"slice0", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::slice(x, 0, 1, 3), 16); }},
      {"slice1", {3, 4}, [&](Tape& t, const Var& x) { return probe(t, ops::slice(x, 1, 0, 2), 17); }},
      {"sum", {3, 4}, [&](Tape& t, const Var& x) { return ops::mul(ops::sum(x), ops::sum(x)); }},
      {"mean", {3, 4}, [&](Tape& t, const Var& x) { return ops::mul(ops::mean(x), ops::sum(ops::mul(x, x))); }},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) worst = std::max(worst, grad_check(c.f, random_tensor(c.shape, rng, -2, 2)));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("softmax rows are distributions even for extreme logits") {
  PrecisionScope f64(Precision::f64);
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Tensor x = random_tensor({4, 7}, rng, -300, 300);
    Var y = ops::softmax(tape.constant(x));
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        CHECK(y.value().at(r, c) >= 0.0);
        s += y.value().at(r, c);
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layernorm standardizes each row") {
  PrecisionScope f64(Precision::f64);
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    Tensor x = random_tensor({3, 16}, rng, -10, 10);
    Var y = ops::layernorm(tape.constant(x), tape.constant(Tensor({16}, 1.0)), tape.constant(Tensor({16}, 0.0)));
    for (std::size_t r = 0; r < 3; ++r) {
      double m = 0, v = 0;
      for (std::size_t c = 0; c < 16; ++c) m += y.value().at(r, c) / 16;
      for (std::size_t c = 0; c < 16; ++c) v += (y.value().at(r, c) - m) * (y.value().at(r, c) - m) / 16;
      CHECK(std::abs(m) < 1e-6);
      CHECK(std::abs(v - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("replaying a graph is bit-identical") {
  Rng rng(7);
  const Tensor a = random_tensor({4, 6}, rng), b = random_tensor({6, 3}, rng);
  auto run = [&] {
    Tape tape;
    Var x = tape.parameter(a, "a");
    Var y = ops::gelu(ops::matmul(x, tape.constant(b)));
    Var loss = ops::mean(ops::softmax(y));
    auto g = tape.backward(ops::mul(loss, loss));
    return std::make_pair(y.value(), g.at("a"));
  };
  CHECK(run() == run());
}

TEST_CASE("f32 mode rounds every recorded value") {
  PrecisionScope f32(Precision::f32);
  Tape tape;
  Var x = tape.constant(Tensor::scalar(0.1));
  Var y = ops::scale(x, 3.0);
  CHECK(x.value().item() == static_cast<double>(0.1f));
  CHECK(y.value().item() == static_cast<double>(static_cast<float>(static_cast<double>(0.1f) * 3.0)));
}

TEST_CASE("tensor files round-trip bit-exactly") {
  mret::testing::TempDir dir("serialize");
  PrecisionScope f32(Precision::f32);
  Rng rng(8);
  TensorMap m;
  m["a"] = random_tensor({3, 5}, rng);
  m["b.c"] = random_tensor({7}, rng);
  for (auto& [k, t] : m) t.round_to_precision();
  save_tensors(dir / "t.json", m, {{"note", "x"}});
  auto back = load_tensors(dir / "t.json");
  CHECK(back.tensors == m);
  CHECK(back.sidecar["note"] == "x");
  CHECK(back.sidecar["tensors"][0]["dtype"] == "float32");
  CHECK(std::filesystem::file_size(dir / "t.bin") == (15 + 7) * 4);
  std::string bytes;
  append_f32_le(bytes, 1.0);
  CHECK(bytes == std::string("\x00\x00\x80\x3f", 4));
}

TEST_CASE("derived random streams are reproducible and independent") {
  Rng a = Rng::derive(42, "init"), b = Rng::derive(42, "init"), c = Rng::derive(42, "center-draw");
  const auto va = a.next(), vb = b.next(), vc = c.next();
  CHECK(va == vb);
  CHECK(va != vc);
  Rng t(3);
  for (int i = 0; i < 2000; ++i) {
    const double v = t.truncated_normal(0.02, 2.0);
    CHECK(std::abs(v) <= 0.04);
  }
}
