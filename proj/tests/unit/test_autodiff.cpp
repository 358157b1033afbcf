#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "qdm/autodiff.hpp"
#include "qdm/error.hpp"
#include "qdm/rng.hpp"

using namespace qdm;
using qdm::testing::max_relative_error;
using qdm::testing::numeric_gradient;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = scale * rng.uniform(-1.0, 1.0);
  return t;
}

// Checks d(loss)/d(x) from the tape against central differences.
void check_gradient(Tensor& x, const std::function<Var(Tape&, Var)>& build, double tol) {
  auto value = [&]() {
    Tape t;
    return build(t, t.parameter(x)).value().item();
  };
  Tape tape;
  const GradientMap g = tape.backward(build(tape, tape.parameter(x)));
  const Tensor numeric = numeric_gradient(x, value);
  CHECK(max_relative_error(g[x], numeric) <= tol);
}

}  // namespace

TEST_CASE("matmul values") {
  Tape t;
  Var a = t.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  Var b = t.constant(Tensor::matrix({{3}, {4}}));
  const Tensor& c = matmul(a, b).value();
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.at(0, 0) == 3.0);
  CHECK(c.at(1, 0) == 4.0);

  Var r = t.constant(Tensor::matrix({{1, 2}}));
  CHECK(matmul(r, b).value().at(0, 0) == 11.0);
}

TEST_CASE("matmul gradient of sum(A.B) wrt A") {
  Tensor A = Tensor::matrix({{1, 2}});
  const Tensor B = Tensor::matrix({{3}, {4}});
  Tape tape;
  Var a = tape.parameter(A);
  const GradientMap g = tape.backward(sum(matmul(a, tape.constant(B))));
  CHECK(g[A][0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(g[A][1] == doctest::Approx(4.0).epsilon(1e-12));

  const Tensor numeric = numeric_gradient(A, [&]() {
    Tape t;
    return sum(matmul(t.constant(A), t.constant(B))).value().item();
  });
  CHECK(max_relative_error(g[A], numeric) < 1e-8);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape t;
  Var a = t.constant(Tensor({2, 3}));
  Var b = t.constant(Tensor({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3] . [2 x 3]") != std::string::npos);
  }
}

TEST_CASE("sigmoid values and saturation") {
  Tape t;
  CHECK(sigmoid(t.constant(Tensor::scalar(0.0))).value().item() == 0.5);
  const double low = sigmoid(t.constant(Tensor::scalar(-1000.0))).value().item();
  CHECK(low >= 0.0);
  CHECK(low <= 1e-300);
  CHECK(std::isfinite(low));
  const double high = sigmoid(t.constant(Tensor::scalar(1000.0))).value().item();
  CHECK(high == 1.0);

  Tensor x = Tensor::scalar(0.0);
  Tape tape;
  const GradientMap g = tape.backward(sigmoid(tape.parameter(x)));
  CHECK(g[x].item() == 0.25);
}

TEST_CASE("euclidean distance values and gradient") {
  Tape t;
  Var v = t.constant(Tensor::vector({1.5, -2.0}));
  CHECK(euclidean_distance(v, v).value().item() == 0.0);
  CHECK(euclidean_distance(t.constant(Tensor::vector({0, 0})), t.constant(Tensor::vector({3, 4}))).value().item() ==
        5.0);

  Tensor a = Tensor::vector({1, 2});
  const Tensor b = Tensor::vector({4, 6});
  check_gradient(a, [&](Tape& tp, Var x) { return euclidean_distance(x, tp.constant(b)); }, 1e-6);

  // Zero distance has zero gradient.
  Tensor z = Tensor::vector({0.3, 0.7});
  Tape tape;
  Var zv = tape.parameter(z);
  const GradientMap g = tape.backward(euclidean_distance(zv, tape.constant(z)));
  CHECK(g[z][0] == 0.0);
  CHECK(g[z][1] == 0.0);
}

TEST_CASE("euclidean distance shape mismatch") {
  Tape t;
  CHECK_THROWS_AS(euclidean_distance(t.constant(Tensor::vector({1, 2})), t.constant(Tensor::vector({1, 2, 3}))),
                  DimensionError);
}

TEST_CASE("batched row distances") {
  Tape t;
  Var a = t.constant(Tensor::matrix({{0, 0}, {1, 1}}));
  Var b = t.constant(Tensor::matrix({{3, 4}, {1, 1}}));
  const Tensor d = euclidean_distance(a, b).value();
  CHECK(d.shape() == Shape{2});
  CHECK(d[0] == 5.0);
  CHECK(d[1] == 0.0);
  const Tensor s = squared_distance(a, b).value();
  CHECK(s[0] == 25.0);
}

TEST_CASE("backward semantics") {
  SUBCASE("sum of parameter vector gives all-ones") {
    Tensor p = Tensor::vector({1, -2, 3});
    Tape t;
    const GradientMap g = t.backward(sum(t.parameter(p)));
    for (std::size_t i = 0; i < 3; ++i) CHECK(g[p][i] == 1.0);
  }
  SUBCASE("constant loss gives zero gradients") {
    Tensor p = Tensor::vector({1, 2});
    Tape t;
    t.parameter(p);
    const GradientMap g = t.backward(sum(t.constant(Tensor::vector({5, 6}))));
    CHECK(g[p][0] == 0.0);
    CHECK(g[p][1] == 0.0);
  }
  SUBCASE("non-scalar loss is a contract error") {
    Tensor p = Tensor::vector({1, 2});
    Tape t;
    CHECK_THROWS_AS(t.backward(t.parameter(p)), ContractError);
  }
  SUBCASE("second backward is a contract error") {
    Tensor p = Tensor::vector({1, 2});
    Tape t;
    Var loss = sum(t.parameter(p));
    t.backward(loss);
    CHECK(t.differentiated());
    CHECK_THROWS_AS(t.backward(loss), ContractError);
  }
  SUBCASE("reused parameter accumulates") {
    Tensor p = Tensor::vector({2.0});
    Tape t;
    Var a = t.parameter(p);
    const GradientMap g = t.backward(sum(mul(a, a)));
    CHECK(g[p][0] == 4.0);
  }
  SUBCASE("inputs precede their op") {
    Tensor p = Tensor::vector({0.1, 0.2});
    Tape t;
    Var y = tanh(sigmoid(scale(t.parameter(p), 2.0)));
    for (std::size_t id = 0; id < t.size(); ++id)
      for (std::size_t in : t.inputs(id)) CHECK(in < id);
    CHECK(y.id == t.size() - 1);
  }
}

TEST_CASE("finite-difference checks for every op") {
  const Tensor other = random_tensor({3, 4}, 7);
  const Tensor w = random_tensor({5, 4}, 8);
  const Tensor wt = random_tensor({4, 5}, 10);
  Tensor x = random_tensor({3, 4}, 9);
  using B = std::function<Var(Tape&, Var)>;
  const std::vector<std::pair<const char*, B>> cases = {
      {"add", [&](Tape& t, Var v) { return sum(mul(add(v, t.constant(other)), t.constant(other))); }},
      {"sub", [&](Tape& t, Var v) { return sum(mul(sub(t.constant(other), v), v)); }},
      {"mul", [&](Tape& t, Var v) { return sum(mul(v, t.constant(other))); }},
      {"scale", [&](Tape&, Var v) { return sum(mul(scale(v, -1.7), v)); }},
      {"add_scalar", [&](Tape&, Var v) { return sum(mul(add_scalar(v, 0.3), v)); }},
      {"sigmoid", [&](Tape&, Var v) { return sum(sigmoid(v)); }},
      {"tanh", [&](Tape&, Var v) { return sum(tanh(v)); }},
      {"relu", [&](Tape&, Var v) { return sum(relu(add_scalar(v, 0.05))); }},
      {"mean", [&](Tape&, Var v) { return mean(mul(v, v)); }},
      {"linear", [&](Tape& t, Var v) { return sum(tanh(linear(v, t.constant(w)))); }},
      {"matmul", [&](Tape& t, Var v) { return sum(tanh(matmul(v, t.constant(wt)))); }},
      {"distance", [&](Tape& t, Var v) { return sum(euclidean_distance(v, t.constant(other))); }},
      {"squared_distance", [&](Tape& t, Var v) { return sum(squared_distance(v, t.constant(other))); }},
      {"cross_entropy", [&](Tape&, Var v) {
         const std::vector<int> labels = {0, 3, 2};
         return softmax_cross_entropy(v, labels);
       }},
  };
  for (const auto& [name, fn] : cases) {
    CAPTURE(name);
    check_gradient(x, fn, 1e-6);
  }
}

TEST_CASE("softmax cross-entropy") {
  Tape t;
  const double uniform = softmax_cross_entropy(t.constant(Tensor(Shape{7}, 0.0)), 3).value().item();
  CHECK(uniform == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  CHECK(uniform == doctest::Approx(1.9459).epsilon(1e-4));

  const double stable = softmax_cross_entropy(t.constant(Tensor::vector({1000.0, 0.0})), 0).value().item();
  CHECK(std::isfinite(stable));
  CHECK(stable == doctest::Approx(0.0));

  Tensor logits = Tensor::vector({0.5, -1.0, 2.0});
  Tape tape;
  const GradientMap g = tape.backward(softmax_cross_entropy(tape.parameter(logits), 1));
  const auto p = softmax(logits.values());
  for (std::size_t k = 0; k < 3; ++k) CHECK(g[logits][k] == doctest::Approx(p[k] - (k == 1 ? 1.0 : 0.0)).epsilon(1e-12));

  const Tensor numeric = numeric_gradient(logits, [&]() {
    Tape t2;
    return softmax_cross_entropy(t2.constant(logits), 1).value().item();
  });
  CHECK(max_relative_error(g[logits], numeric) < 1e-6);

  CHECK_THROWS_AS(softmax_cross_entropy(t.constant(logits), 3), ContractError);
}

TEST_CASE("tensor helpers") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  const Tensor a = Tensor::vector({1, 2});
  Tensor b = a;
  CHECK(a.bitwise_equal(b));
  b[0] = std::nextafter(1.0, 2.0);
  CHECK_FALSE(a.bitwise_equal(b));
  b[0] = std::numeric_limits<double>::infinity();
  CHECK_FALSE(b.all_finite());
  CHECK(argmax(std::vector<double>{0.1, 3.0, 3.0, -1.0}) == 1);
}
