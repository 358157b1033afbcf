#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "qdm/error.hpp"
#include "qdm/pairing.hpp"

using namespace qdm;

namespace {

// counts[c] single-row windows of class c; reading = global index.
WindowedDataset make_classes(const std::vector<std::size_t>& counts) {
  std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  std::vector<double> values(n);
  std::iota(values.begin(), values.end(), 0.0);
  auto raw = std::make_shared<const SeriesMatrix>(n, 1, values);
  std::vector<WindowRef> refs;
  std::vector<int> labels;
  std::size_t row = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (std::size_t k = 0; k < counts[c]; ++k) {
      refs.push_back({0, row++});
      labels.push_back(static_cast<int>(c));
    }
  return WindowedDataset({raw}, refs, labels, 1, static_cast<int>(counts.size()));
}

// Membership predicates plus the gamma rule.
bool valid_quadruplet(const WindowedDataset& ds, const Quadruplet& q, std::uint8_t gamma) {
  const int a = ds.label(q.anchor);
  const auto& I = ds.imbalance_set();
  if (ds.label(q.positive) != a) return false;
  if (ds.class_size(a) >= 2 && q.positive == q.anchor) return false;
  const int n = ds.label(q.negative);
  if (n == a || I.count(n)) return false;
  const int m = ds.label(q.minor);
  if (m == a) return false;
  if (I.size() >= 2) {
    bool other_imbalanced = false;
    for (int k : I) other_imbalanced = other_imbalanced || k != a;
    if (other_imbalanced && !I.count(m)) return false;
  }
  return gamma == (I.count(a) ? 0 : 1);
}

}  // namespace

TEST_CASE("make_windows boundaries") {
  SUBCASE("n=10, W=4, s=2") {
    SeriesMatrix raw(10, 1, std::vector<double>(10, 0.0));
    std::vector<int> labels = {0, 0, 0, 1, 1, 1, 2, 2, 2, 2};
    const WindowedDataset ds = make_windows(raw, labels, 4, 2);
    REQUIRE(ds.size() == 4);
    const std::vector<std::size_t> starts = {0, 2, 4, 6};
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(ds.window(k).start == starts[k]);
      CHECK(ds.label(k) == labels[starts[k] + 3]);
    }
  }
  SUBCASE("n == W gives one window labelled by the last row") {
    SeriesMatrix raw(5, 2, std::vector<double>(10, 1.0));
    const std::vector<int> labels = {0, 0, 0, 0, 1};
    const WindowedDataset ds = make_windows(raw, labels, 5, 1);
    REQUIRE(ds.size() == 1);
    CHECK(ds.label(0) == 1);
  }
  SUBCASE("TE run geometry") {
    CHECK(window_count(500, 100, 1) == 401);
    SeriesMatrix raw(500, 3, std::vector<double>(1500, 0.0));
    const WindowedDataset ds = make_windows(raw, std::vector<int>(500, 0), 100, 1);
    CHECK(ds.size() == 401);
  }
  SUBCASE("errors") {
    SeriesMatrix raw(3, 1, std::vector<double>(3, 0.0));
    const std::vector<int> labels(3, 0);
    CHECK_THROWS_AS(make_windows(raw, labels, 4, 1), ContractError);
    CHECK_THROWS_AS(make_windows(raw, labels, 2, 0), ContractError);
    CHECK_THROWS_AS(make_windows(raw, std::vector<int>(2, 0), 2, 1), ContractError);
  }
}

TEST_CASE("window contents reference the raw rows") {
  std::vector<double> v(20);
  std::iota(v.begin(), v.end(), 0.0);
  SeriesMatrix raw(10, 2, v);
  const WindowedDataset ds = make_windows(raw, std::vector<int>(10, 0), 3, 3);
  const Tensor s = ds.sample(2);
  CHECK(s.shape() == Shape{3, 2});
  CHECK(s.at(0, 0) == 12.0);
  CHECK(s.at(2, 1) == 17.0);
  CHECK(ds.value(1, 1, 0) == 8.0);
}

TEST_CASE("class index partitions the samples") {
  const WindowedDataset ds = make_classes({3, 0, 5, 2});
  std::vector<int> seen(ds.size(), 0);
  for (std::size_t c = 0; c < ds.class_index().size(); ++c)
    for (auto i : ds.class_index()[c]) {
      ++seen[i];
      CHECK(ds.label(i) == static_cast<int>(c));
    }
  for (int s : seen) CHECK(s == 1);
  CHECK(ds.present_classes() == std::vector<int>{0, 2, 3});
}

TEST_CASE("imbalance set must be a strict subset of present classes") {
  WindowedDataset ds = make_classes({3, 3, 3});
  CHECK_THROWS_AS(ds.set_imbalance_set({0, 1, 2}), ContractError);
  CHECK_THROWS_AS(ds.set_imbalance_set({5}), ContractError);
  ds.set_imbalance_set({1, 2});
  CHECK(ds.is_imbalanced(2));
}

TEST_CASE("three classes, one imbalanced") {
  WindowedDataset ds = make_classes({30, 30, 5});
  ds.set_imbalance_set({2});
  Rng rng(1);
  std::set<int> minor_seen;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t anchor = rng.index(30);  // class 0
    const Quadruplet q = complete_quadruplet(ds, anchor, rng);
    CHECK(ds.label(q.positive) == 0);
    CHECK(q.positive != q.anchor);
    CHECK(ds.label(q.negative) == 1);
    const int m = ds.label(q.minor);
    CHECK((m == 1 || m == 2));
    minor_seen.insert(m);
  }
  CHECK(minor_seen.size() == 2);
}

TEST_CASE("two imbalanced classes, anchor in one of them") {
  WindowedDataset ds = make_classes({20, 4, 4});
  ds.set_imbalance_set({1, 2});
  Rng rng(2);
  std::vector<std::size_t> anchors = {20, 21, 22, 23};
  const QuadrupletBatch b = complete_quadruplets(ds, anchors, rng);
  for (std::size_t i = 0; i < b.size(); ++i) {
    CHECK(b.gamma[i] == 0);
    CHECK(ds.label(b.tuples[i].negative) == 0);
    CHECK(ds.label(b.tuples[i].minor) == 2);
  }
}

TEST_CASE("two classes, anchor in the imbalanced class") {
  WindowedDataset ds = make_classes({10, 3});
  ds.set_imbalance_set({1});
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Quadruplet q = complete_quadruplet(ds, 10 + rng.index(3), rng);
    CHECK(ds.label(q.positive) == 1);
    CHECK(ds.label(q.negative) == 0);
    CHECK(ds.label(q.minor) == 0);
  }
}

TEST_CASE("missing negative class is a sampling error naming the class") {
  WindowedDataset ds = make_classes({10, 3, 3});
  ds.set_imbalance_set({1, 2});
  Rng rng(4);
  try {
    complete_quadruplet(ds, 0, rng);
    FAIL("expected SamplingError");
  } catch (const SamplingError& e) {
    CHECK(std::string(e.what()).find("anchor class 0") != std::string::npos);
  }
  // Anchors from imbalanced classes still have class 0 as a negative.
  CHECK_NOTHROW(complete_quadruplet(ds, 10, rng));
}

TEST_CASE("multi-imbalance minor fallback") {
  WindowedDataset ds = make_classes({10, 10, 3, 3});
  ds.set_imbalance_set({2, 3});
  CHECK(minor_classes(ds, 2) == std::vector<int>{3});
  CHECK(minor_classes(ds, 0) == std::vector<int>{2, 3});
  WindowedDataset one_left = make_classes({10, 10, 3, 0});
  one_left.set_imbalance_set({2});
  CHECK(minor_classes(one_left, 2) == std::vector<int>{0, 1});
}

TEST_CASE("singleton class uses the anchor as its own positive") {
  WindowedDataset ds = make_classes({5, 1});
  Rng rng(5);
  const Quadruplet q = complete_quadruplet(ds, 5, rng);
  CHECK(q.positive == 5);
}

TEST_CASE("negatives split evenly over three eligible classes") {
  WindowedDataset ds = make_classes({20, 20, 20, 20, 5});
  ds.set_imbalance_set({4});
  Rng rng(9);
  std::vector<int> counts(5, 0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(ds.label(complete_quadruplet(ds, 0, rng).negative))];
  for (int c = 1; c <= 3; ++c) CHECK(std::abs(counts[static_cast<std::size_t>(c)] / double(n) - 1.0 / 3.0) <= 0.02);
  CHECK(counts[0] + counts[4] == 0);
}

TEST_CASE("partner classes are uniform over eligible classes") {
  // Class sizes differ a lot; negatives should still split evenly by class.
  WindowedDataset ds = make_classes({50, 400, 20, 10});
  ds.set_imbalance_set({3});
  Rng rng(6);
  std::vector<int> counts(4, 0);
  const int n = 30000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(ds.label(complete_quadruplet(ds, 0, rng).negative))];
  CHECK(counts[0] == 0);
  CHECK(counts[3] == 0);
  CHECK(std::abs(counts[1] - n / 2) < 600);
  CHECK(std::abs(counts[2] - n / 2) < 600);
}

TEST_CASE("randomized sampler soundness") {
  Rng cfg(77);
  std::size_t checked = 0, violations = 0;
  while (checked < 10000) {
    const std::size_t C = 2 + cfg.index(5);
    std::vector<std::size_t> counts(C);
    for (auto& c : counts) c = 1 + cfg.index(12);
    WindowedDataset ds = make_classes(counts);
    std::set<int> imb;
    const std::size_t k = cfg.index(C);  // 0..C-1 imbalanced classes
    while (imb.size() < k) imb.insert(static_cast<int>(cfg.index(C)));
    ds.set_imbalance_set(imb);
    Rng rng(cfg.next());
    for (int b = 0; b < 50; ++b) {
      const auto anchors = sample_anchors(ds, 1, rng);
      if (negative_classes(ds, ds.label(anchors[0])).empty()) {
        CHECK_THROWS_AS(complete_quadruplets(ds, anchors, rng), SamplingError);
        continue;
      }
      const QuadrupletBatch batch = complete_quadruplets(ds, anchors, rng);
      violations += valid_quadruplet(ds, batch.tuples[0], batch.gamma[0]) ? 0 : 1;
      ++checked;
    }
  }
  CHECK(violations == 0);
}

TEST_CASE("anchor sampling modes") {
  const WindowedDataset ds = make_classes({90, 10});
  Rng a(1), b(1);
  const auto s = sample_anchors(ds, 4000, a, AnchorSampling::kUniformOverSamples);
  const auto c = sample_anchors(ds, 4000, b, AnchorSampling::kUniformOverClasses);
  auto minority = [&](const std::vector<std::size_t>& v) {
    std::size_t n = 0;
    for (auto i : v) n += ds.label(i) == 1;
    return static_cast<double>(n) / static_cast<double>(v.size());
  };
  CHECK(minority(s) == doctest::Approx(0.1).epsilon(0.25));
  CHECK(minority(c) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("triplets ignore the imbalance set") {
  WindowedDataset ds = make_classes({10, 10, 3});
  ds.set_imbalance_set({2});
  Rng rng(8);
  std::vector<std::size_t> anchors(3000, 0);
  std::set<int> neg;
  for (const auto& t : complete_triplets(ds, anchors, rng)) {
    CHECK(ds.label(t.positive) == 0);
    CHECK(t.positive != 0);
    neg.insert(ds.label(t.negative));
  }
  CHECK(neg == std::set<int>{1, 2});
}

TEST_CASE("apply_imbalance") {
  const WindowedDataset ds = make_classes({4800, 40, 4800});
  SUBCASE("4800 -> 480") {
    Rng rng(1);
    const WindowedDataset out = apply_imbalance(ds, {{2, std::size_t{480}}}, rng);
    CHECK(out.class_size(2) == 480);
    CHECK(out.class_size(0) == 4800);
    CHECK(out.imbalance_set() == std::set<int>{2});
    // Retained samples keep their original order.
    double last = -1;
    for (auto i : out.class_index()[2]) {
      CHECK(out.value(i, 0, 0) > last);
      last = out.value(i, 0, 0);
    }
  }
  SUBCASE("fraction") {
    Rng rng(1);
    CHECK(apply_imbalance(ds, {{0, KeepFraction{0.1}}}, rng).class_size(0) == 480);
  }
  SUBCASE("target equal to the count keeps the set") {
    Rng rng(2);
    const WindowedDataset out = apply_imbalance(ds, {{1, std::size_t{40}}}, rng);
    WindowedDataset expected = ds;
    expected.set_imbalance_set({1});
    CHECK(out.same_content(expected));
  }
  SUBCASE("seeds change the subset, not its size") {
    Rng r1(3), r2(4), r3(3);
    const WindowedDataset a = apply_imbalance(ds, {{2, std::size_t{100}}}, r1);
    const WindowedDataset b = apply_imbalance(ds, {{2, std::size_t{100}}}, r2);
    const WindowedDataset c = apply_imbalance(ds, {{2, std::size_t{100}}}, r3);
    CHECK(a.size() == b.size());
    CHECK_FALSE(a.same_content(b));
    CHECK(a.same_content(c));
  }
  SUBCASE("errors") {
    Rng rng(5);
    CHECK_THROWS_AS(apply_imbalance(ds, {{1, std::size_t{41}}}, rng), ContractError);
    CHECK_THROWS_AS(apply_imbalance(ds, {{1, std::size_t{0}}}, rng), ContractError);
    CHECK_THROWS_AS(apply_imbalance(ds, {{1, KeepFraction{1.5}}}, rng), ContractError);
  }
}

TEST_CASE("normalization is fitted on training rows only") {
  std::vector<double> v = {1, 10, 3, 30, 5, 50, 100, 1000};
  auto raw = std::make_shared<const SeriesMatrix>(4, 2, v);
  const WindowedDataset all = make_windows(raw, std::vector<int>(4, 0), 1, 1);
  const std::vector<std::size_t> train_idx = {0, 1, 2};
  const WindowedDataset train = all.subset(train_idx);
  const NormalizationStats s = fit_normalization(train);
  CHECK(s.mean[0] == doctest::Approx(3.0));
  CHECK(s.mean[1] == doctest::Approx(30.0));
  CHECK(s.fitted_on == train.fingerprint());
  const WindowedDataset z = apply_normalization(train, s);
  CHECK(z.value(0, 0, 0) == doctest::Approx((1.0 - 3.0) / s.stddev[0]));
  CHECK(z.normalization()->fitted_on == train.fingerprint());
  CHECK_THROWS_AS(apply_normalization(z, s), ContractError);
}
