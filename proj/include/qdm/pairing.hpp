#pragma once

// Tuple sampling over a WindowedDataset.
//
// Quadruplet membership, with C(x) the class of x and I the imbalanced set:
//   positive: C = C(anchor)
//   negative: C != C(anchor), C not in I
//   minor:    C != C(anchor)                  if |I| == 1
//             C != C(anchor), C in I          otherwise
// Partner classes are drawn uniformly among the eligible classes, then a
// sample uniformly within the chosen class.

#include <cstdint>
#include <map>
#include <variant>
#include <vector>

#include "qdm/dataset.hpp"
#include "qdm/rng.hpp"

namespace qdm {

enum class AnchorSampling { kUniformOverSamples, kUniformOverClasses };

struct Quadruplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
  std::size_t minor = 0;
  bool operator==(const Quadruplet&) const = default;
};

struct QuadrupletBatch {
  std::vector<Quadruplet> tuples;
  std::vector<std::uint8_t> gamma;  // 1 iff the anchor's class is balanced
  std::size_t size() const noexcept { return tuples.size(); }
};

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// Eligible partner classes for an anchor of class c (present classes only).
std::vector<int> negative_classes(const WindowedDataset& ds, int c);
std::vector<int> minor_classes(const WindowedDataset& ds, int c);

std::vector<std::size_t> sample_anchors(const WindowedDataset& ds, std::size_t count, Rng& rng,
                                        AnchorSampling mode = AnchorSampling::kUniformOverSamples);

// Draws positive, negative and minor partners for one anchor. Throws
// SamplingError when no negative class exists for the anchor's class.
Quadruplet complete_quadruplet(const WindowedDataset& ds, std::size_t anchor, Rng& rng);

QuadrupletBatch complete_quadruplets(const WindowedDataset& ds, std::span<const std::size_t> anchors, Rng& rng);

QuadrupletBatch sample_quadruplets(const WindowedDataset& ds, std::size_t batch_size, Rng& rng,
                                   AnchorSampling mode = AnchorSampling::kUniformOverSamples);

// Imbalance-unaware pairs for the siamese/triplet baselines: the negative is
// drawn from any class other than the anchor's.
std::vector<Triplet> complete_triplets(const WindowedDataset& ds, std::span<const std::size_t> anchors, Rng& rng);

// Per-class subsampling target: a kept fraction in (0, 1] or an absolute count.
struct KeepFraction {
  double value;
};
using ImbalanceTarget = std::variant<KeepFraction, std::size_t>;

// Uniform subsample without replacement per listed class. The listed classes
// become the imbalance set; retained samples keep their original order.
WindowedDataset apply_imbalance(const WindowedDataset& ds, const std::map<int, ImbalanceTarget>& targets, Rng& rng);

}  // namespace qdm
