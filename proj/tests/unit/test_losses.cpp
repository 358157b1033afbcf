#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qdm/error.hpp"
#include "qdm/losses.hpp"
#include "qdm/network.hpp"
#include "qdm/rng.hpp"

using namespace qdm;
using qdm::testing::max_relative_error;
using qdm::testing::numeric_gradient;

namespace {

// One-dimensional embeddings placed so that D(anchor, x) = |x|.
QuadrupletLoss one_tuple(Tape& t, double d_pos, double d_neg, double d_minor, bool gamma,
                         const QuadrupletLossConfig& cfg) {
  static thread_local std::vector<std::uint8_t> g(1);
  g[0] = gamma ? 1 : 0;
  return quadruplet_loss(t.constant(Tensor::vector({0.0})), t.constant(Tensor::vector({d_pos})),
                         t.constant(Tensor::vector({d_neg})), t.constant(Tensor::vector({d_minor})), g, cfg);
}

}  // namespace

TEST_CASE("contrastive loss examples") {
  Tape t;
  Var a = t.constant(Tensor::vector({0.0, 0.0}));
  CHECK(contrastive_loss(a, a, true, 20.0).value().item() == 0.0);
  CHECK(contrastive_loss(a, t.constant(Tensor::vector({15.0, 20.0})), false, 20.0).value().item() == 0.0);
  CHECK(contrastive_loss(a, t.constant(Tensor::vector({3.0, 4.0})), false, 20.0).value().item() == 15.0);
  CHECK(contrastive_loss(a, t.constant(Tensor::vector({3.0, 4.0})), true, 20.0).value().item() == 5.0);
}

TEST_CASE("triplet loss examples") {
  Tape t;
  Var a = t.constant(Tensor::vector({0.0, 0.0}));
  // a = p and ||a - n||^2 equal to the margin: exactly on the hinge.
  CHECK(triplet_loss(a, a, t.constant(Tensor::vector({1.0, 2.0})), 5.0).value().item() == 0.0);
  CHECK(triplet_loss(a, t.constant(Tensor::vector({1.0, 0.0})), t.constant(Tensor::vector({1.0, 3.0})), 5.0)
            .value()
            .item() == 0.0);
  CHECK(triplet_loss(a, t.constant(Tensor::vector({2.0, 0.0})), t.constant(Tensor::vector({0.0, 1.0})), 2.0)
            .value()
            .item() == 5.0);
}

TEST_CASE("quadruplet loss examples with TE constants") {
  const auto cfg = QuadrupletLossConfig::te_defaults();
  Tape t;
  SUBCASE("balanced anchor weights the positive by lambda_pos") {
    const QuadrupletLoss l = one_tuple(t, 2.0, 100.0, 100.0, true, cfg);
    CHECK(l.pos.value().item() == 100.0);
    CHECK(l.neg.value().item() == 0.0);
    CHECK(l.minor.value().item() == 0.0);
    CHECK(std::abs(l.total.value().item() - 100.0 / 3.0) <= 1e-12);
  }
  SUBCASE("imbalanced anchor weights the positive by 1") {
    CHECK(one_tuple(t, 2.0, 100.0, 100.0, false, cfg).pos.value().item() == 2.0);
  }
  SUBCASE("negative beyond the margin") { CHECK(one_tuple(t, 0.0, 25.0, 100.0, true, cfg).neg.value().item() == 0.0); }
  SUBCASE("minor inside its margin") {
    CHECK(one_tuple(t, 0.0, 100.0, 30.0, true, cfg).minor.value().item() == 400.0);
  }
  SUBCASE("full breakdown") {
    const QuadrupletLoss l = one_tuple(t, 2.0, 5.0, 30.0, true, cfg);
    CHECK(l.neg.value().item() == 15.0);
    CHECK(std::abs(l.total.value().item() - (100.0 + 15.0 + 400.0) / 3.0) <= 1e-12);
    CHECK(std::abs(quadruplet_loss_value(2.0, 5.0, 30.0, true, cfg) - (100.0 + 15.0 + 400.0) / 3.0) <= 1e-12);
  }
  SUBCASE("identical embeddings") {
    const QuadrupletLoss l = one_tuple(t, 0.0, 0.0, 0.0, false, cfg);
    CHECK(std::abs(l.total.value().item() - (0.0 + 20.0 + 20.0 * 50.0) / 3.0) <= 1e-12);
  }
}

TEST_CASE("batched quadruplet loss is the mean of per-tuple losses") {
  const auto cfg = QuadrupletLossConfig::cwru_defaults();
  const Tensor a = Tensor::matrix({{0.0, 0.0}, {1.0, 1.0}, {0.5, 0.2}});
  const Tensor p = Tensor::matrix({{0.3, 0.4}, {1.0, 1.0}, {0.1, 0.9}});
  const Tensor n = Tensor::matrix({{3.0, 4.0}, {7.0, 9.0}, {0.5, 0.2}});
  const Tensor m = Tensor::matrix({{6.0, 8.0}, {1.0, 2.0}, {0.0, 0.0}});
  const std::vector<std::uint8_t> g = {1, 0, 1};
  Tape t;
  const double batched =
      quadruplet_loss(t.constant(a), t.constant(p), t.constant(n), t.constant(m), g, cfg).total.value().item();
  auto dist = [](const Tensor& x, const Tensor& y, std::size_t r) {
    return std::hypot(x.at(r, 0) - y.at(r, 0), x.at(r, 1) - y.at(r, 1));
  };
  double expected = 0.0;
  for (std::size_t r = 0; r < 3; ++r)
    expected += quadruplet_loss_value(dist(a, p, r), dist(a, n, r), dist(a, m, r), g[r] != 0, cfg);
  expected /= 3.0;
  CHECK(std::abs(batched - expected) <= 1e-12);
  CHECK_THROWS_AS(quadruplet_loss(t.constant(a), t.constant(p), t.constant(n), t.constant(m),
                                  std::vector<std::uint8_t>{1, 0}, cfg),
                  DimensionError);
}

TEST_CASE("quadruplet loss properties") {
  Rng rng(31);
  const auto cfg = QuadrupletLossConfig::te_defaults();
  std::size_t failures = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    const double dp = rng.uniform(0.0, 60.0), dn = rng.uniform(0.0, 60.0), dm = rng.uniform(0.0, 60.0);
    const bool g = rng.uniform() < 0.5;
    const double v = quadruplet_loss_value(dp, dn, dm, g, cfg);
    failures += v < 0.0;
    const double step = rng.uniform(0.0, 5.0);
    failures += quadruplet_loss_value(dp + step, dn, dm, g, cfg) < v;
    failures += quadruplet_loss_value(dp, dn + step, dm, g, cfg) > v;
    failures += quadruplet_loss_value(dp, dn, dm + step, g, cfg) > v;
    QuadrupletLossConfig other = cfg;
    other.lambda_pos = rng.uniform(1.5, 100.0);
    failures += quadruplet_loss_value(dp, dn, dm, false, other) != quadruplet_loss_value(dp, dn, dm, false, cfg);
  }
  CHECK(failures == 0);
  CHECK(quadruplet_loss_value(0.0, 20.0, 50.0, true, cfg) == 0.0);
  CHECK(quadruplet_loss_value(0.0, 25.0, 51.0, false, cfg) == 0.0);
  CHECK(quadruplet_loss_value(1e-9, 25.0, 51.0, true, cfg) > 0.0);
  CHECK(quadruplet_loss_value(0.0, 19.999, 51.0, true, cfg) > 0.0);
  CHECK(quadruplet_loss_value(0.0, 25.0, 49.999, true, cfg) > 0.0);
}

TEST_CASE("combined loss") {
  Tape t;
  Var soft = t.constant(Tensor::scalar(1.0));
  Var quad = t.constant(Tensor::scalar(400.0));
  CHECK(combined_loss(soft, quad, 0.0).value().item() == 1.0);
  CHECK(std::abs(combined_loss(soft, quad, 5e-4).value().item() - 1.2) <= 1e-12);
  CHECK_THROWS_AS(combined_loss(t.constant(Tensor::vector({1, 2})), quad, 1.0), ContractError);
}

TEST_CASE("metric term leaves the classifier untouched") {
  const ModelParams model = ModelParams::init({2, 4, 1, 3, 3}, 0.0, 11);
  Rng rng(1);
  Tape t;
  const ModelVars vars = bind(t, model);
  auto seq = [&](double phase) {
    std::vector<Tensor> steps;
    for (int k = 0; k < 5; ++k) steps.push_back(Tensor::matrix({{std::sin(k + phase), std::cos(k * phase)}}));
    return embed(vars, lstm_forward(vars, steps, 0.0, false, rng));
  };
  const std::vector<std::uint8_t> g = {1};
  const QuadrupletLoss l = quadruplet_loss(seq(0.1), seq(0.2), seq(1.3), seq(2.1), g, QuadrupletLossConfig{});
  const GradientMap grads = t.backward(l.total);
  const Tensor& gfc = grads[model.classifier.w_fc];
  for (std::size_t i = 0; i < gfc.size(); ++i) CHECK(gfc[i] == 0.0);
  double fe = 0.0;
  for (std::size_t i = 0; i < grads[model.embed.w_fe].size(); ++i) fe += std::abs(grads[model.embed.w_fe][i]);
  CHECK(fe > 0.0);
}

TEST_CASE("finite-difference gradients of the loss terms") {
  const QuadrupletLossConfig cfg{0.8, 1.5, 3.0, 2.0, 1e-3};
  const std::vector<std::uint8_t> g = {1, 0};
  const Tensor p = Tensor::matrix({{0.3, 0.1, -0.2}, {0.4, 0.9, 0.2}});
  const Tensor n = Tensor::matrix({{0.2, 0.5, 0.1}, {-0.5, 0.4, 0.6}});
  const Tensor m = Tensor::matrix({{0.9, -0.3, 0.3}, {0.1, 0.1, 0.1}});
  Tensor a = Tensor::matrix({{0.1, 0.2, 0.3}, {0.2, 0.1, -0.1}});
  auto quad = [&](Tape& t, Var av) {
    return quadruplet_loss(av, t.constant(p), t.constant(n), t.constant(m), g, cfg).total;
  };
  auto contrastive = [&](Tape& t, Var av) {
    return contrastive_loss(av, t.constant(n), std::vector<std::uint8_t>{1, 0}, 1.0);
  };
  auto triplet = [&](Tape& t, Var av) { return triplet_loss(av, t.constant(p), t.constant(n), 1.0); };
  for (const auto& build : {std::function<Var(Tape&, Var)>(quad), std::function<Var(Tape&, Var)>(contrastive),
                            std::function<Var(Tape&, Var)>(triplet)}) {
    Tape tape;
    const GradientMap grads = tape.backward(build(tape, tape.parameter(a)));
    const Tensor numeric = numeric_gradient(a, [&]() {
      Tape t;
      return build(t, t.constant(a)).value().item();
    });
    CHECK(max_relative_error(grads[a], numeric) <= 1e-6);
  }
}

TEST_CASE("loss config validation") {
  CHECK_NOTHROW(QuadrupletLossConfig::te_defaults().validate());
  CHECK_NOTHROW(QuadrupletLossConfig::cwru_defaults().validate());
  QuadrupletLossConfig equal_margins;
  equal_margins.minor_margin = equal_margins.margin;
  CHECK_THROWS_AS(equal_margins.validate(true), ConfigError);
  CHECK_NOTHROW(equal_margins.validate(false));
  QuadrupletLossConfig unit_lambda;
  unit_lambda.lambda_pos = 1.0;
  unit_lambda.lambda_minor = 1.0;
  CHECK_THROWS_AS(unit_lambda.validate(true), ConfigError);
  CHECK_NOTHROW(unit_lambda.validate(false));
  QuadrupletLossConfig bad;
  bad.minor_margin = 10.0;
  try {
    bad.validate(false);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("M2") != std::string::npos);
  }
  bad = {};
  bad.beta = -1.0;
  CHECK_THROWS_AS(bad.validate(true), ConfigError);
}
