#include "qdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "qdm/error.hpp"

namespace qdm {

namespace {

class Fnv64 {
 public:
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  void str(const std::string& s) {
    pod(s.size());
    bytes(s.data(), s.size());
  }
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

SeriesMatrix::SeriesMatrix(std::size_t r, std::size_t c, std::vector<double> v)
    : rows(r), cols(c), values(std::move(v)) {
  if (values.size() != rows * cols)
    throw DimensionError("series matrix " + std::to_string(rows) + "x" + std::to_string(cols) + " given " +
                         std::to_string(values.size()) + " values");
}

LabelMap LabelMap::identity(int class_count) {
  LabelMap m;
  for (int c = 0; c < class_count; ++c) {
    m.source_ids.push_back(c);
    m.names.push_back("class " + std::to_string(c));
  }
  return m;
}

WindowedDataset::WindowedDataset(std::vector<std::shared_ptr<const SeriesMatrix>> runs,
                                 std::vector<WindowRef> windows, std::vector<int> labels,
                                 std::size_t window_length, int class_count)
    : runs_(std::move(runs)),
      windows_(std::move(windows)),
      labels_(std::move(labels)),
      window_length_(window_length),
      class_count_(class_count) {
  if (windows_.size() != labels_.size()) throw ContractError("windows and labels differ in length");
  if (window_length_ == 0) throw ContractError("window length must be positive");
  for (const auto& r : runs_) {
    if (!r) throw ContractError("null run");
    if (feature_count_ == 0) feature_count_ = r->cols;
    if (r->cols != feature_count_) throw DimensionError("runs have differing feature counts");
  }
  for (std::size_t i = 0; i < windows_.size(); ++i) {
    const auto& w = windows_[i];
    if (w.run >= runs_.size() || w.start + window_length_ > runs_[w.run]->rows)
      throw ContractError("window " + std::to_string(i) + " exceeds its run");
    if (labels_[i] < 0) throw ContractError("negative label at window " + std::to_string(i));
    if (labels_[i] >= class_count_) class_count_ = labels_[i] + 1;
  }
  label_map_ = LabelMap::identity(class_count_);
  rebuild_index();
}

void WindowedDataset::rebuild_index() {
  class_index_.assign(static_cast<std::size_t>(std::max(class_count_, 0)), {});
  for (std::size_t i = 0; i < labels_.size(); ++i) class_index_[static_cast<std::size_t>(labels_[i])].push_back(i);
}

std::vector<int> WindowedDataset::present_classes() const {
  std::vector<int> out;
  for (int c = 0; c < class_count_; ++c)
    if (!class_index_[static_cast<std::size_t>(c)].empty()) out.push_back(c);
  return out;
}

void WindowedDataset::set_imbalance_set(std::set<int> classes) {
  if (!classes.empty()) {
    const auto present = present_classes();
    for (int c : classes)
      if (!std::binary_search(present.begin(), present.end(), c))
        throw ContractError("imbalanced class " + std::to_string(c) + " has no samples");
    if (classes.size() >= present.size())
      throw ContractError("imbalance set must leave at least one balanced class");
  }
  imbalance_ = std::move(classes);
}

void WindowedDataset::set_label_map(LabelMap m) {
  if (m.names.size() != m.source_ids.size()) throw ContractError("label map names/ids differ in length");
  if (static_cast<int>(m.size()) < class_count_)
    throw ContractError("label map covers " + std::to_string(m.size()) + " of " + std::to_string(class_count_) +
                        " classes");
  if (static_cast<int>(m.size()) > class_count_) {
    class_count_ = static_cast<int>(m.size());
    rebuild_index();
  }
  label_map_ = std::move(m);
}

Tensor WindowedDataset::sample(std::size_t i) const {
  const WindowRef& w = windows_.at(i);
  const SeriesMatrix& r = *runs_[w.run];
  std::vector<double> v(r.values.begin() + static_cast<std::ptrdiff_t>(w.start * r.cols),
                        r.values.begin() + static_cast<std::ptrdiff_t>((w.start + window_length_) * r.cols));
  return Tensor(Shape{window_length_, feature_count_}, std::move(v));
}

WindowedDataset WindowedDataset::subset(std::span<const std::size_t> indices) const {
  std::vector<WindowRef> w;
  std::vector<int> l;
  w.reserve(indices.size());
  l.reserve(indices.size());
  for (auto i : indices) {
    w.push_back(windows_.at(i));
    l.push_back(labels_[i]);
  }
  WindowedDataset out(runs_, std::move(w), std::move(l), window_length_, class_count_);
  out.label_map_ = label_map_;
  out.normalization_ = normalization_;
  std::set<int> imb;
  for (int c : imbalance_)
    if (!out.class_index_[static_cast<std::size_t>(c)].empty()) imb.insert(c);
  if (imb.size() < out.present_classes().size()) out.imbalance_ = std::move(imb);
  return out;
}

WindowedDataset WindowedDataset::materialized() const {
  std::vector<std::shared_ptr<const SeriesMatrix>> runs;
  std::vector<WindowRef> w;
  runs.reserve(size());
  for (std::size_t i = 0; i < size(); ++i) {
    Tensor s = sample(i);
    runs.push_back(std::make_shared<const SeriesMatrix>(window_length_, feature_count_, std::move(s.buffer())));
    w.push_back(WindowRef{i, 0});
  }
  WindowedDataset out(std::move(runs), std::move(w), labels_, window_length_, class_count_);
  out.label_map_ = label_map_;
  out.normalization_ = normalization_;
  out.imbalance_ = imbalance_;
  return out;
}

WindowedDataset WindowedDataset::concat(std::span<const WindowedDataset> parts) {
  if (parts.empty()) throw ContractError("concat of zero datasets");
  std::vector<std::shared_ptr<const SeriesMatrix>> runs;
  std::vector<WindowRef> w;
  std::vector<int> l;
  int classes = 0;
  const std::size_t wl = parts.front().window_length();
  for (const auto& p : parts) {
    if (p.window_length() != wl) throw DimensionError("concat: window lengths differ");
    const std::size_t base = runs.size();
    runs.insert(runs.end(), p.runs_.begin(), p.runs_.end());
    for (std::size_t i = 0; i < p.size(); ++i) {
      w.push_back(WindowRef{p.windows_[i].run + base, p.windows_[i].start});
      l.push_back(p.labels_[i]);
    }
    classes = std::max(classes, p.class_count_);
  }
  WindowedDataset out(std::move(runs), std::move(w), std::move(l), wl, classes);
  const auto& first = parts.front();
  if (static_cast<int>(first.label_map_.size()) == out.class_count_) out.label_map_ = first.label_map_;
  out.normalization_ = first.normalization_;
  return out;
}

std::string WindowedDataset::fingerprint() const {
  Fnv64 h;
  h.pod(window_length_);
  h.pod(feature_count_);
  h.pod(class_count_);
  h.pod(windows_.size());
  for (std::size_t i = 0; i < size(); ++i) {
    h.pod(labels_[i]);
    const WindowRef& w = windows_[i];
    const SeriesMatrix& r = *runs_[w.run];
    h.bytes(&r.values[w.start * r.cols], window_length_ * r.cols * sizeof(double));
  }
  for (int c : imbalance_) h.pod(c);
  for (std::size_t c = 0; c < label_map_.size(); ++c) {
    h.pod(label_map_.source_ids[c]);
    h.str(label_map_.names[c]);
  }
  return hex64(h.digest());
}

bool WindowedDataset::same_content(const WindowedDataset& o) const {
  if (size() != o.size() || window_length_ != o.window_length_ || feature_count_ != o.feature_count_ ||
      class_count_ != o.class_count_ || labels_ != o.labels_ || imbalance_ != o.imbalance_ ||
      !(label_map_ == o.label_map_) || !(normalization_ == o.normalization_))
    return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (!sample(i).bitwise_equal(o.sample(i))) return false;
  return true;
}

WindowedDataset make_windows(std::shared_ptr<const SeriesMatrix> raw, std::span<const int> raw_labels,
                             std::size_t window, std::size_t step, int class_count) {
  if (!raw) throw ContractError("make_windows: null series");
  if (window == 0) throw ContractError("make_windows: window must be positive");
  if (step == 0) throw ContractError("make_windows: step must be positive");
  if (raw_labels.size() != raw->rows)
    throw ContractError("make_windows: " + std::to_string(raw_labels.size()) + " labels for " +
                        std::to_string(raw->rows) + " rows");
  if (raw->rows < window)
    throw ContractError("make_windows: series of " + std::to_string(raw->rows) + " rows is shorter than window " +
                        std::to_string(window));
  const std::size_t n = window_count(raw->rows, window, step);
  std::vector<WindowRef> w;
  std::vector<int> l;
  w.reserve(n);
  l.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t start = k * step;
    w.push_back(WindowRef{0, start});
    l.push_back(raw_labels[start + window - 1]);
  }
  int classes = class_count;
  if (classes < 0)
    classes = l.empty() ? 0 : *std::max_element(l.begin(), l.end()) + 1;
  return WindowedDataset({std::move(raw)}, std::move(w), std::move(l), window, classes);
}

WindowedDataset make_windows(const SeriesMatrix& raw, std::span<const int> raw_labels, std::size_t window,
                             std::size_t step, int class_count) {
  return make_windows(std::make_shared<const SeriesMatrix>(raw), raw_labels, window, step, class_count);
}

NormalizationStats fit_normalization(const WindowedDataset& train) {
  if (train.empty()) throw ContractError("fit_normalization: empty dataset");
  const std::size_t m = train.feature_count();
  const auto& runs = train.runs();
  std::vector<std::vector<char>> covered(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) covered[r].assign(runs[r]->rows, 0);
  for (const auto& w : train.windows())
    std::fill_n(covered[w.run].begin() + static_cast<std::ptrdiff_t>(w.start), train.window_length(), 1);

  std::vector<double> sum(m, 0.0), sq(m, 0.0);
  double count = 0.0;
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (std::size_t t = 0; t < runs[r]->rows; ++t) {
      if (!covered[r][t]) continue;
      count += 1.0;
      for (std::size_t f = 0; f < m; ++f) sum[f] += runs[r]->at(t, f);
    }
  NormalizationStats s;
  s.mean.resize(m);
  s.stddev.resize(m);
  for (std::size_t f = 0; f < m; ++f) s.mean[f] = sum[f] / count;
  for (std::size_t r = 0; r < runs.size(); ++r)
    for (std::size_t t = 0; t < runs[r]->rows; ++t) {
      if (!covered[r][t]) continue;
      for (std::size_t f = 0; f < m; ++f) {
        const double d = runs[r]->at(t, f) - s.mean[f];
        sq[f] += d * d;
      }
    }
  for (std::size_t f = 0; f < m; ++f) {
    const double sd = std::sqrt(sq[f] / count);
    s.stddev[f] = sd > 1e-12 ? sd : 1.0;  // constant feature: centre only
  }
  s.fitted_on = train.fingerprint();
  return s;
}

WindowedDataset apply_normalization(const WindowedDataset& ds, const NormalizationStats& stats) {
  if (stats.mean.size() != ds.feature_count() || stats.stddev.size() != ds.feature_count())
    throw DimensionError("normalization stats cover " + std::to_string(stats.mean.size()) + " features, dataset has " +
                         std::to_string(ds.feature_count()));
  if (ds.normalization()) throw ContractError("dataset is already normalized");
  std::vector<std::shared_ptr<const SeriesMatrix>> runs;
  for (const auto& r : ds.runs()) {
    SeriesMatrix n = *r;
    for (std::size_t t = 0; t < n.rows; ++t)
      for (std::size_t f = 0; f < n.cols; ++f)
        n.values[t * n.cols + f] = (n.values[t * n.cols + f] - stats.mean[f]) / stats.stddev[f];
    runs.push_back(std::make_shared<const SeriesMatrix>(std::move(n)));
  }
  WindowedDataset out(std::move(runs), ds.windows(), ds.labels(), ds.window_length(), ds.class_count());
  out.set_label_map(ds.label_map());
  out.set_imbalance_set(ds.imbalance_set());
  out.set_normalization(stats);
  return out;
}

}  // namespace qdm
