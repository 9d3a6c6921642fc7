#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "rct/gradcheck.hpp"
#include "rct/ops.hpp"

using namespace rct;

namespace {

Tensor<double> rowvec(std::initializer_list<double> xs) {
  Tensor<double> t(1, static_cast<Index>(xs.size()));
  Index i = 0;
  for (double x : xs) t(0, i++) = x;
  return t;
}

Tensor<double> random_tensor(Index r, Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor<double> t(r, c);
  for (Index i = 0; i < t.size(); ++i) t.data()[i] = n(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul by identity returns the operand") {
  std::mt19937_64 rng(1);
  Graph<double> g;
  const Tensor<double> x = random_tensor(3, 4, rng);
  Var<double> out = matmul(g.constant(Tensor<double>::Identity(3, 3)), g.constant(x));
  CHECK(out.value() == x);
}

TEST_CASE("shape errors name both operands") {
  Graph<double> g;
  Var<double> a = g.constant(Tensor<double>::Zero(2, 3));
  Var<double> b = g.constant(Tensor<double>::Zero(2, 3));
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[2 x 3] and [2 x 3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, g.constant(Tensor<double>::Zero(3, 2))), ShapeError);
  CHECK_THROWS_AS(mean(a, 2), ShapeError);
}

TEST_CASE("mean over either axis of a constant tensor is the constant") {
  Graph<double> g;
  Var<double> c = g.constant(Tensor<double>::Constant(3, 5, 2.5));
  Var<double> m0 = mean(c, 0);
  Var<double> m1 = mean(c, 1);
  CHECK(m0.rows() == 1);
  CHECK(m0.cols() == 5);
  CHECK(m1.rows() == 3);
  CHECK(m1.cols() == 1);
  CHECK((m0.value().array() == 2.5).all());
  CHECK((m1.value().array() == 2.5).all());
}

TEST_CASE("concat then slice recovers the parts") {
  std::mt19937_64 rng(2);
  Graph<double> g;
  const Tensor<double> a = random_tensor(2, 3, rng);
  const Tensor<double> b = random_tensor(4, 3, rng);
  std::vector<Var<double>> rows{g.constant(a), g.constant(b)};
  Var<double> cat = concat_rows<double>(rows);
  CHECK(slice_rows(cat, 0, 2).value() == a);
  CHECK(slice_rows(cat, 2, 4).value() == b);

  const Tensor<double> c = random_tensor(2, 5, rng);
  std::vector<Var<double>> cols{g.constant(a), g.constant(c)};
  Var<double> wide = concat_cols<double>(cols);
  CHECK(slice_cols(wide, 0, 3).value() == a);
  CHECK(slice_cols(wide, 3, 5).value() == c);
  CHECK_THROWS_AS(slice_rows(cat, 5, 2), ShapeError);
}

TEST_CASE("softmax examples") {
  Graph<double> g;
  SUBCASE("uniform") {
    Var<double> s = softmax_rows(g.constant(rowvec({0, 0, 0, 0})));
    for (Index j = 0; j < 4; ++j) CHECK(s.value()(0, j) == doctest::Approx(0.25).epsilon(1e-15));
  }
  SUBCASE("large logit does not overflow") {
    Var<double> s = softmax_rows(g.constant(rowvec({1000, 0})));
    CHECK(std::isfinite(s.value()(0, 0)));
    CHECK(s.value()(0, 0) == doctest::Approx(1.0));
    CHECK(s.value()(0, 1) == doctest::Approx(0.0));
    Graph<float> gf;
    Tensor<float> t(1, 2);
    t << 1000.0f, 0.0f;
    Var<float> sf = softmax_rows(gf.constant(t));
    CHECK(std::isfinite(sf.value()(0, 0)));
    CHECK(sf.value()(0, 0) == doctest::Approx(1.0));
  }
  SUBCASE("log weights") {
    Var<double> s = softmax_rows(g.constant(rowvec({std::log(1.0), std::log(2.0), std::log(3.0)})));
    CHECK(s.value()(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    CHECK(s.value()(0, 1) == doctest::Approx(2.0 / 6.0).epsilon(1e-12));
    CHECK(s.value()(0, 2) == doctest::Approx(3.0 / 6.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax rows sum to one for random inputs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.1, 50.0);
  std::uniform_int_distribution<int> width(1, 40);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = width(rng);
    const Tensor<double> x = random_tensor(4, n, rng, scale(rng));
    Graph<float> g;
    Var<float> s = softmax_rows(g.constant(Tensor<float>(x.cast<float>())));
    for (Index i = 0; i < 4; ++i) {
      CHECK(std::abs(s.value().row(i).cast<double>().sum() - 1.0) < 1e-6);
      CHECK((s.value().row(i).array() >= 0.0f).all());
    }
  }
}

TEST_CASE("layer norm examples") {
  Graph<double> g;
  Var<double> ones = g.constant(Tensor<double>::Ones(1, 2));
  Var<double> zeros = g.constant(Tensor<double>::Zero(1, 2));
  SUBCASE("constant input") {
    Var<double> y = layer_norm_rows(g.constant(rowvec({3, 3})), ones, zeros);
    CHECK(y.value()(0, 0) == 0.0);
    CHECK(y.value()(0, 1) == 0.0);
  }
  SUBCASE("unit variance input with vanishing eps") {
    Var<double> y = layer_norm_rows(g.constant(rowvec({-1, 1})), ones, zeros, 1e-14);
    CHECK(y.value()(0, 0) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(y.value()(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant input returns the bias") {
    Var<double> y = layer_norm_rows(g.constant(rowvec({7, 7})), ones, g.constant(rowvec({0.5, -2})));
    CHECK(y.value()(0, 0) == 0.5);
    CHECK(y.value()(0, 1) == -2.0);
  }
  CHECK_THROWS(layer_norm_rows(g.constant(rowvec({1, 2})), ones, zeros, 0.0));
}

TEST_CASE("l1 subgradient follows the sign of the residual") {
  Parameter<double> w("w", rowvec({0.5, -1.0, 2.0}).transpose());
  const Tensor<double> x = rowvec({1.0, 2.0, 3.0});
  Tensor<double> y(1, 1);
  y << 1.0;  // w.x = 4.5 > y
  Graph<double> g;
  g.backward(l1_loss(matmul(g.constant(x), g.parameter(w)), y));
  CHECK(w.grad.transpose() == x);

  Parameter<double> w2("w", rowvec({0.5, 0.0, 0.0}).transpose());
  Tensor<double> y2(1, 1);
  y2 << 0.5;  // residual exactly 0
  Graph<double> g2;
  g2.backward(l1_loss(matmul(g2.constant(x), g2.parameter(w2)), y2));
  CHECK(w2.grad.isZero());
}

TEST_CASE("l1 loss examples") {
  Graph<double> g;
  Tensor<double> p(2, 1), t(2, 1);
  p << 1, 3;
  t << 2, 2;
  CHECK(l1_loss(g.constant(p), t).value()(0, 0) == 1.0);
  CHECK(l1_loss(g.constant(t), t).value()(0, 0) == 0.0);
  CHECK(l1_loss(g.constant(Tensor<double>(p * -3.0)), Tensor<double>(t * -3.0)).value()(0, 0) == 3.0);
  CHECK_THROWS_AS(l1_loss(g.constant(p), Tensor<double>(Tensor<double>::Zero(3, 1))), ShapeError);
}

TEST_CASE("gradient of the sum of a softmax is zero") {
  std::mt19937_64 rng(4);
  Parameter<double> z("z", random_tensor(1, 6, rng));
  Graph<double> g;
  g.backward(sum(softmax_rows(g.parameter(z))));
  CHECK(z.grad.cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("gradients accumulate across uses of a parameter") {
  Parameter<double> w("w", rowvec({2.0, -3.0}));
  Graph<double> g;
  Var<double> p = g.parameter(w);
  g.backward(sum(add(p, p)));
  CHECK(w.grad == rowvec({2.0, 2.0}));
  Graph<double> g2;
  g2.backward(sum(mul(g2.parameter(w), g2.parameter(w))));
  // 2 from before plus d(w^2)/dw = 2w
  CHECK(w.grad == rowvec({6.0, -4.0}));
}

TEST_CASE("backward rejects non-scalar outputs") {
  Parameter<double> w("w", rowvec({1.0, 2.0}));
  Graph<double> g;
  CHECK_THROWS_AS(g.backward(g.parameter(w)), ShapeError);
}

TEST_CASE("dropout at rate zero is the identity") {
  std::mt19937_64 rng(5);
  Graph<double> g;
  const Tensor<double> x = random_tensor(3, 3, rng);
  CHECK(dropout(g.constant(x), 0.0, rng).value() == x);
}

TEST_CASE("gradcheck passes a linear layer at 1e-7") {
  std::mt19937_64 rng(6);
  Parameter<double> w("w", random_tensor(4, 3, rng));
  Parameter<double> b("b", random_tensor(1, 3, rng));
  const Tensor<double> x = random_tensor(5, 4, rng);
  std::vector<Parameter<double>*> params{&w, &b};
  auto f = [&](Graph<double>& g) {
    Var<double> y = add_row(matmul(g.constant(x), g.parameter(w)), g.parameter(b));
    return sum(mul(y, y));
  };
  const GradcheckReport r = gradcheck<double>(f, params, 1e-7);
  CHECK(r.passed);
  CHECK(r.entries.size() == 2);
  CHECK(r.max_rel_error < 1e-7);
}

TEST_CASE("gradcheck passes composed ops") {
  std::mt19937_64 rng(7);
  Parameter<double> w("w", random_tensor(4, 4, rng, 0.5));
  Parameter<double> gain("gain", random_tensor(1, 4, rng));
  Parameter<double> bias("bias", random_tensor(1, 4, rng));
  const Tensor<double> x = random_tensor(6, 4, rng);
  const Segments seg{0, 2, 6};
  std::vector<Parameter<double>*> params{&w, &gain, &bias};
  auto f = [&](Graph<double>& g) {
    Var<double> h = layer_norm_rows(matmul(g.constant(x), g.parameter(w)), g.parameter(gain), g.parameter(bias));
    Var<double> a = multi_head_attention(h, h, gelu(h), seg, 2);
    Var<double> pooled = segment_mean(softmax_rows(a), seg);
    Var<double> flat = reshape(pooled, 1, 8);
    return sum(mul(flat, flat));
  };
  const GradcheckReport r = gradcheck<double>(f, params, 1e-6);
  CHECK_MESSAGE(r.passed, "max rel error " << r.max_rel_error);
}

TEST_CASE("gradcheck flags a corrupted gradient") {
  Parameter<double> w("w", rowvec({0.3, -0.7, 1.1}));
  std::vector<Parameter<double>*> params{&w};
  // y = sum(w^2) with a backward that drops the factor 2
  auto f = [&](Graph<double>& g) {
    Var<double> p = g.parameter(w);
    Tensor<double> out(1, 1);
    out(0, 0) = p.value().squaredNorm();
    return g.record(std::move(out), {p}, [ip = p.id()](Graph<double>& gg, std::size_t self) {
      gg.accumulate(ip, gg.value(ip) * gg.grad(self)(0, 0));
    });
  };
  const GradcheckReport r = gradcheck<double>(f, params, 1e-5);
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_error == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("gradcheck rejects a non-deterministic function") {
  Parameter<double> w("w", rowvec({1.0}));
  std::vector<Parameter<double>*> params{&w};
  int calls = 0;
  auto f = [&](Graph<double>& g) {
    ++calls;
    return scale(sum(g.parameter(w)), static_cast<double>(calls));
  };
  CHECK_THROWS_AS(gradcheck<double>(f, params, 1e-5), StateError);
}
