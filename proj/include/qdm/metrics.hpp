#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qdm {

class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int class_count = 0);
  static ConfusionMatrix from_predictions(std::span<const int> truth, std::span<const int> predicted, int class_count);

  void add(int truth, int predicted, std::uint64_t n = 1);
  int class_count() const noexcept { return classes_; }
  std::uint64_t at(int truth, int predicted) const { return counts_[index(truth, predicted)]; }
  std::uint64_t total() const noexcept { return total_; }

  std::uint64_t true_positives(int c) const;
  std::uint64_t false_negatives(int c) const;
  std::uint64_t false_positives(int c) const;

 private:
  std::size_t index(int t, int p) const;
  int classes_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

struct ClassMetrics {
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t tp = 0, fn = 0, fp = 0;
  bool zero_support = false;  // TP + FN == 0; recall reported as 0
};

struct RunMetadata {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string dataset_fingerprint;
  std::vector<std::string> class_names;  // label bijection: class id -> source name
  std::vector<int> source_ids;
  std::map<std::string, std::string> extra;
};

struct EvalReport {
  std::vector<ClassMetrics> per_class;
  double macro_recall = 0.0;  // unweighted over all classes
  double macro_f1 = 0.0;
  // Unweighted over classes other than `normal_class` (equal to the above
  // when no normal class is designated).
  double fault_macro_recall = 0.0;
  double fault_macro_f1 = 0.0;
  int normal_class = -1;
  std::vector<std::vector<std::uint64_t>> confusion;
  std::uint64_t samples = 0;
  RunMetadata meta;

  int class_count() const { return static_cast<int>(per_class.size()); }
};

// recall = TP/(TP+FN), F1 = 2TP/(2TP+FN+FP); zero denominators give 0.
EvalReport report_from_confusion(const ConfusionMatrix& cm, int normal_class = -1);
EvalReport report_from_predictions(std::span<const int> truth, std::span<const int> predicted, int class_count,
                                   int normal_class = -1);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation (n-1); 0 for a single run
};

struct AggregateReport {
  std::vector<MetricSummary> recall, f1;
  MetricSummary macro_recall, macro_f1, fault_macro_recall, fault_macro_f1;
  std::size_t runs = 0;
  std::vector<std::string> class_names;
};

// Elementwise mean and sample standard deviation; class sets must match.
AggregateReport aggregate(std::span<const EvalReport> reports);

nlohmann::json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const AggregateReport& a);
// Plain-text per-class table.
std::string format_report(const EvalReport& r);

}  // namespace qdm
