#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "qdm/autodiff.hpp"

namespace qdm {

// Row-major block of sensor readings: one row per sampling tick.
struct SeriesMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  SeriesMatrix() = default;
  SeriesMatrix(std::size_t r, std::size_t c, std::vector<double> v);
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

struct WindowRef {
  std::size_t run = 0;
  std::size_t start = 0;  // first row (0-based) of the window within the run
  bool operator==(const WindowRef&) const = default;
};

// Class id -> human-readable name and the identifier it had in the source
// data (TE fault number, CWRU label, synthetic class index).
struct LabelMap {
  std::vector<int> source_ids;
  std::vector<std::string> names;

  std::size_t size() const noexcept { return names.size(); }
  static LabelMap identity(int class_count);
  bool operator==(const LabelMap&) const = default;
};

// Per-feature z-score statistics and the fingerprint of the split they were
// fitted on.
struct NormalizationStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  std::string fitted_on;
  bool operator==(const NormalizationStats&) const = default;
};

// Windows over one or more raw runs. Windows are (run, start) offsets into
// shared immutable run storage; nothing is copied until sample() is called.
class WindowedDataset {
 public:
  WindowedDataset() = default;
  WindowedDataset(std::vector<std::shared_ptr<const SeriesMatrix>> runs, std::vector<WindowRef> windows,
                  std::vector<int> labels, std::size_t window_length, int class_count);

  std::size_t size() const noexcept { return windows_.size(); }
  bool empty() const noexcept { return windows_.empty(); }
  std::size_t window_length() const noexcept { return window_length_; }
  std::size_t feature_count() const noexcept { return feature_count_; }
  int class_count() const noexcept { return class_count_; }

  const std::vector<int>& labels() const noexcept { return labels_; }
  int label(std::size_t i) const { return labels_[i]; }
  const WindowRef& window(std::size_t i) const { return windows_[i]; }
  const std::vector<WindowRef>& windows() const noexcept { return windows_; }
  const std::vector<std::shared_ptr<const SeriesMatrix>>& runs() const noexcept { return runs_; }

  // Class id -> sample indices, ascending. Partitions [0, size()).
  const std::vector<std::vector<std::size_t>>& class_index() const noexcept { return class_index_; }
  std::size_t class_size(int c) const { return class_index_.at(static_cast<std::size_t>(c)).size(); }
  std::vector<int> present_classes() const;

  const std::set<int>& imbalance_set() const noexcept { return imbalance_; }
  // Must be a strict subset of the present classes.
  void set_imbalance_set(std::set<int> classes);
  bool is_imbalanced(int c) const { return imbalance_.count(c) != 0; }

  const LabelMap& label_map() const noexcept { return label_map_; }
  void set_label_map(LabelMap m);
  const std::optional<NormalizationStats>& normalization() const noexcept { return normalization_; }
  void set_normalization(NormalizationStats s) { normalization_ = std::move(s); }

  // Reading f of timestep t of window i.
  double value(std::size_t i, std::size_t t, std::size_t f) const {
    const WindowRef& w = windows_[i];
    return runs_[w.run]->at(w.start + t, f);
  }
  // Copy of window i as a [W x m] tensor.
  Tensor sample(std::size_t i) const;

  // Windows at the given indices, in the given order, sharing run storage.
  WindowedDataset subset(std::span<const std::size_t> indices) const;
  // Same windows with every window copied into its own run.
  WindowedDataset materialized() const;
  static WindowedDataset concat(std::span<const WindowedDataset> parts);

  // Content hash over shapes, labels, metadata and referenced readings.
  std::string fingerprint() const;

  // Exact equality of shapes, labels, window readings and metadata.
  bool same_content(const WindowedDataset& other) const;

 private:
  void rebuild_index();

  std::vector<std::shared_ptr<const SeriesMatrix>> runs_;
  std::vector<WindowRef> windows_;
  std::vector<int> labels_;
  std::size_t window_length_ = 0;
  std::size_t feature_count_ = 0;
  int class_count_ = 0;
  std::vector<std::vector<std::size_t>> class_index_;
  std::set<int> imbalance_;
  LabelMap label_map_;
  std::optional<NormalizationStats> normalization_;
};

// Sliding windows over one run. Window k covers rows [k*step, k*step + W)
// and carries the label of its last row.
WindowedDataset make_windows(std::shared_ptr<const SeriesMatrix> raw, std::span<const int> raw_labels,
                             std::size_t window, std::size_t step, int class_count = -1);
WindowedDataset make_windows(const SeriesMatrix& raw, std::span<const int> raw_labels, std::size_t window,
                             std::size_t step, int class_count = -1);

inline std::size_t window_count(std::size_t rows, std::size_t window, std::size_t step) {
  return rows < window ? 0 : (rows - window) / step + 1;
}

// Per-feature z-score fitted on the rows covered by train's windows.
NormalizationStats fit_normalization(const WindowedDataset& train);
// Copy of ds with standardized readings; stats are recorded on the result.
WindowedDataset apply_normalization(const WindowedDataset& ds, const NormalizationStats& stats);

std::string hex64(std::uint64_t v);

}  // namespace qdm
