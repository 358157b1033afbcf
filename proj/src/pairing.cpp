#include "qdm/pairing.hpp"

#include <algorithm>
#include <cmath>

#include "qdm/error.hpp"

namespace qdm {

namespace {

std::string class_name(const WindowedDataset& ds, int c) {
  const auto& m = ds.label_map();
  if (static_cast<std::size_t>(c) < m.size()) return std::to_string(c) + " (" + m.names[static_cast<std::size_t>(c)] + ")";
  return std::to_string(c);
}

std::size_t draw_from_class(const WindowedDataset& ds, int c, Rng& rng) {
  const auto& members = ds.class_index()[static_cast<std::size_t>(c)];
  return members[rng.index(members.size())];
}

std::size_t draw_from_classes(const WindowedDataset& ds, const std::vector<int>& classes, Rng& rng) {
  const int c = classes[rng.index(classes.size())];
  return draw_from_class(ds, c, rng);
}

}  // namespace

std::vector<int> negative_classes(const WindowedDataset& ds, int c) {
  std::vector<int> out;
  for (int k : ds.present_classes())
    if (k != c && !ds.is_imbalanced(k)) out.push_back(k);
  return out;
}

std::vector<int> minor_classes(const WindowedDataset& ds, int c) {
  std::vector<int> out;
  const bool single = ds.imbalance_set().size() == 1;
  for (int k : ds.present_classes()) {
    if (k == c) continue;
    if (single || ds.is_imbalanced(k)) out.push_back(k);
  }
  // Multi-imbalance with no other imbalanced class left: fall back to the
  // single-imbalance rule so the sampler stays total.
  if (out.empty())
    for (int k : ds.present_classes())
      if (k != c) out.push_back(k);
  return out;
}

std::vector<std::size_t> sample_anchors(const WindowedDataset& ds, std::size_t count, Rng& rng,
                                        AnchorSampling mode) {
  if (ds.empty()) throw SamplingError("cannot sample anchors from an empty dataset");
  std::vector<std::size_t> out(count);
  if (mode == AnchorSampling::kUniformOverSamples) {
    for (auto& a : out) a = rng.index(ds.size());
  } else {
    const auto classes = ds.present_classes();
    for (auto& a : out) a = draw_from_classes(ds, classes, rng);
  }
  return out;
}

Quadruplet complete_quadruplet(const WindowedDataset& ds, std::size_t anchor, Rng& rng) {
  if (anchor >= ds.size()) throw ContractError("anchor index out of range");
  const int c = ds.label(anchor);
  const auto neg = negative_classes(ds, c);
  if (neg.empty()) throw SamplingError("no negative class available for anchor class " + class_name(ds, c));
  if (ds.present_classes().size() < 2) throw SamplingError("quadruplet sampling needs at least two classes");
  const auto minor = minor_classes(ds, c);

  Quadruplet q;
  q.anchor = anchor;
  const auto& same = ds.class_index()[static_cast<std::size_t>(c)];
  if (same.size() >= 2) {
    // Uniform over the class excluding the anchor itself.
    const std::size_t pos_in_class =
        static_cast<std::size_t>(std::lower_bound(same.begin(), same.end(), anchor) - same.begin());
    std::size_t k = rng.index(same.size() - 1);
    if (k >= pos_in_class) ++k;
    q.positive = same[k];
  } else {
    q.positive = anchor;
  }
  q.negative = draw_from_classes(ds, neg, rng);
  q.minor = draw_from_classes(ds, minor, rng);
  return q;
}

QuadrupletBatch complete_quadruplets(const WindowedDataset& ds, std::span<const std::size_t> anchors, Rng& rng) {
  QuadrupletBatch b;
  b.tuples.reserve(anchors.size());
  b.gamma.reserve(anchors.size());
  for (auto a : anchors) {
    b.tuples.push_back(complete_quadruplet(ds, a, rng));
    b.gamma.push_back(ds.is_imbalanced(ds.label(a)) ? 0 : 1);
  }
  return b;
}

QuadrupletBatch sample_quadruplets(const WindowedDataset& ds, std::size_t batch_size, Rng& rng,
                                   AnchorSampling mode) {
  if (batch_size == 0) throw ContractError("batch size must be positive");
  const auto anchors = sample_anchors(ds, batch_size, rng, mode);
  return complete_quadruplets(ds, anchors, rng);
}

std::vector<Triplet> complete_triplets(const WindowedDataset& ds, std::span<const std::size_t> anchors, Rng& rng) {
  std::vector<Triplet> out;
  out.reserve(anchors.size());
  const auto present = ds.present_classes();
  for (auto a : anchors) {
    const int c = ds.label(a);
    std::vector<int> others;
    for (int k : present)
      if (k != c) others.push_back(k);
    if (others.empty()) throw SamplingError("no negative class available for anchor class " + class_name(ds, c));
    Triplet t;
    t.anchor = a;
    const auto& same = ds.class_index()[static_cast<std::size_t>(c)];
    if (same.size() >= 2) {
      const std::size_t pos_in_class =
          static_cast<std::size_t>(std::lower_bound(same.begin(), same.end(), a) - same.begin());
      std::size_t k = rng.index(same.size() - 1);
      if (k >= pos_in_class) ++k;
      t.positive = same[k];
    } else {
      t.positive = a;
    }
    t.negative = draw_from_classes(ds, others, rng);
    out.push_back(t);
  }
  return out;
}

WindowedDataset apply_imbalance(const WindowedDataset& ds, const std::map<int, ImbalanceTarget>& targets, Rng& rng) {
  std::vector<char> keep(ds.size(), 1);
  std::set<int> imbalanced;
  for (const auto& [c, target] : targets) {
    if (c < 0 || c >= ds.class_count()) throw ContractError("imbalance target for unknown class " + std::to_string(c));
    const auto& members = ds.class_index()[static_cast<std::size_t>(c)];
    std::size_t want;
    if (const auto* f = std::get_if<KeepFraction>(&target)) {
      if (!(f->value > 0.0 && f->value <= 1.0))
        throw ContractError("keep fraction for class " + std::to_string(c) + " must lie in (0, 1]");
      want = static_cast<std::size_t>(std::llround(f->value * static_cast<double>(members.size())));
      want = std::max<std::size_t>(want, 1);
    } else {
      want = std::get<std::size_t>(target);
    }
    if (want > members.size())
      throw ContractError("imbalance target " + std::to_string(want) + " exceeds the " +
                          std::to_string(members.size()) + " samples of class " + std::to_string(c));
    if (want == 0) throw ContractError("imbalance target for class " + std::to_string(c) + " must be positive");
    // Partial Fisher-Yates: the first `want` positions form the kept subset.
    std::vector<std::size_t> pool = members;
    for (std::size_t i = 0; i < want; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    for (auto i : members) keep[i] = 0;
    for (std::size_t i = 0; i < want; ++i) keep[pool[i]] = 1;
    imbalanced.insert(c);
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (keep[i]) idx.push_back(i);
  WindowedDataset out = ds.subset(idx);
  out.set_imbalance_set(std::move(imbalanced));
  return out;
}

}  // namespace qdm
