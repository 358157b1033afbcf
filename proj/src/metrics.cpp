#include "qdm/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "qdm/error.hpp"

namespace qdm {

ConfusionMatrix::ConfusionMatrix(int class_count)
    : classes_(class_count), counts_(static_cast<std::size_t>(class_count * class_count), 0) {
  if (class_count < 0) throw ContractError("negative class count");
}

std::size_t ConfusionMatrix::index(int t, int p) const {
  if (t < 0 || t >= classes_ || p < 0 || p >= classes_)
    throw ContractError("class id out of range for a " + std::to_string(classes_) + "-class confusion matrix");
  return static_cast<std::size_t>(t) * static_cast<std::size_t>(classes_) + static_cast<std::size_t>(p);
}

void ConfusionMatrix::add(int truth, int predicted, std::uint64_t n) {
  counts_[index(truth, predicted)] += n;
  total_ += n;
}

ConfusionMatrix ConfusionMatrix::from_predictions(std::span<const int> truth, std::span<const int> predicted,
                                                  int class_count) {
  if (truth.size() != predicted.size()) throw ContractError("truth and predictions differ in length");
  ConfusionMatrix cm(class_count);
  for (std::size_t i = 0; i < truth.size(); ++i) cm.add(truth[i], predicted[i]);
  return cm;
}

std::uint64_t ConfusionMatrix::true_positives(int c) const { return at(c, c); }

std::uint64_t ConfusionMatrix::false_negatives(int c) const {
  std::uint64_t s = 0;
  for (int p = 0; p < classes_; ++p)
    if (p != c) s += at(c, p);
  return s;
}

std::uint64_t ConfusionMatrix::false_positives(int c) const {
  std::uint64_t s = 0;
  for (int t = 0; t < classes_; ++t)
    if (t != c) s += at(t, c);
  return s;
}

EvalReport report_from_confusion(const ConfusionMatrix& cm, int normal_class) {
  if (cm.total() == 0) throw ContractError("cannot evaluate an empty dataset");
  EvalReport r;
  const int C = cm.class_count();
  r.normal_class = normal_class;
  r.samples = cm.total();
  r.confusion.assign(static_cast<std::size_t>(C), std::vector<std::uint64_t>(static_cast<std::size_t>(C)));
  double sr = 0, sf = 0, fr = 0, ff = 0;
  int fault_classes = 0;
  for (int c = 0; c < C; ++c) {
    for (int p = 0; p < C; ++p) r.confusion[static_cast<std::size_t>(c)][static_cast<std::size_t>(p)] = cm.at(c, p);
    ClassMetrics m;
    m.tp = cm.true_positives(c);
    m.fn = cm.false_negatives(c);
    m.fp = cm.false_positives(c);
    m.zero_support = m.tp + m.fn == 0;
    m.recall = m.zero_support ? 0.0 : static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
    const std::uint64_t f1_den = 2 * m.tp + m.fn + m.fp;
    m.f1 = f1_den == 0 ? 0.0 : static_cast<double>(2 * m.tp) / static_cast<double>(f1_den);
    r.per_class.push_back(m);
    sr += m.recall;
    sf += m.f1;
    if (c != normal_class) {
      fr += m.recall;
      ff += m.f1;
      ++fault_classes;
    }
  }
  r.macro_recall = C ? sr / C : 0.0;
  r.macro_f1 = C ? sf / C : 0.0;
  r.fault_macro_recall = fault_classes ? fr / fault_classes : 0.0;
  r.fault_macro_f1 = fault_classes ? ff / fault_classes : 0.0;
  return r;
}

EvalReport report_from_predictions(std::span<const int> truth, std::span<const int> predicted, int class_count,
                                   int normal_class) {
  return report_from_confusion(ConfusionMatrix::from_predictions(truth, predicted, class_count), normal_class);
}

namespace {

MetricSummary summarize(const std::vector<double>& xs) {
  MetricSummary s;
  const double n = static_cast<double>(xs.size());
  for (double x : xs) s.mean += x;
  s.mean /= n;
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(ss / (n - 1));
  }
  return s;
}

nlohmann::json summary_json(const MetricSummary& s) { return {{"mean", s.mean}, {"std", s.stddev}}; }

}  // namespace

AggregateReport aggregate(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ContractError("aggregate of zero reports");
  const int C = reports.front().class_count();
  for (const auto& r : reports) {
    if (r.class_count() != C) throw ContractError("aggregate: reports have different class sets");
    if (!r.meta.class_names.empty() && !reports.front().meta.class_names.empty() &&
        r.meta.class_names != reports.front().meta.class_names)
      throw ContractError("aggregate: reports have different class sets");
  }
  AggregateReport a;
  a.runs = reports.size();
  a.class_names = reports.front().meta.class_names;
  for (int c = 0; c < C; ++c) {
    std::vector<double> rec, f1;
    for (const auto& r : reports) {
      rec.push_back(r.per_class[static_cast<std::size_t>(c)].recall);
      f1.push_back(r.per_class[static_cast<std::size_t>(c)].f1);
    }
    a.recall.push_back(summarize(rec));
    a.f1.push_back(summarize(f1));
  }
  auto field = [&](auto getter) {
    std::vector<double> xs;
    for (const auto& r : reports) xs.push_back(getter(r));
    return summarize(xs);
  };
  a.macro_recall = field([](const EvalReport& r) { return r.macro_recall; });
  a.macro_f1 = field([](const EvalReport& r) { return r.macro_f1; });
  a.fault_macro_recall = field([](const EvalReport& r) { return r.fault_macro_recall; });
  a.fault_macro_f1 = field([](const EvalReport& r) { return r.fault_macro_f1; });
  return a;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    nlohmann::json e = {{"class", c},     {"recall", m.recall}, {"f1", m.f1},
                        {"tp", m.tp},     {"fn", m.fn},         {"fp", m.fp},
                        {"zero_support", m.zero_support}};
    if (c < r.meta.class_names.size()) e["name"] = r.meta.class_names[c];
    classes.push_back(e);
  }
  return {{"per_class", classes},
          {"macro_recall", r.macro_recall},
          {"macro_f1", r.macro_f1},
          {"fault_macro_recall", r.fault_macro_recall},
          {"fault_macro_f1", r.fault_macro_f1},
          {"normal_class", r.normal_class},
          {"confusion", r.confusion},
          {"samples", r.samples},
          {"meta",
           {{"seed", r.meta.seed},
            {"config_hash", r.meta.config_hash},
            {"dataset_fingerprint", r.meta.dataset_fingerprint},
            {"class_names", r.meta.class_names},
            {"source_ids", r.meta.source_ids},
            {"extra", r.meta.extra}}}};
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  EvalReport r;
  for (const auto& e : j.at("per_class")) {
    ClassMetrics m;
    m.recall = e.at("recall").get<double>();
    m.f1 = e.at("f1").get<double>();
    m.tp = e.at("tp").get<std::uint64_t>();
    m.fn = e.at("fn").get<std::uint64_t>();
    m.fp = e.at("fp").get<std::uint64_t>();
    m.zero_support = e.at("zero_support").get<bool>();
    r.per_class.push_back(m);
  }
  r.macro_recall = j.at("macro_recall").get<double>();
  r.macro_f1 = j.at("macro_f1").get<double>();
  r.fault_macro_recall = j.at("fault_macro_recall").get<double>();
  r.fault_macro_f1 = j.at("fault_macro_f1").get<double>();
  r.normal_class = j.at("normal_class").get<int>();
  r.confusion = j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>();
  r.samples = j.at("samples").get<std::uint64_t>();
  const auto& meta = j.at("meta");
  r.meta.seed = meta.at("seed").get<std::uint64_t>();
  r.meta.config_hash = meta.at("config_hash").get<std::string>();
  r.meta.dataset_fingerprint = meta.at("dataset_fingerprint").get<std::string>();
  r.meta.class_names = meta.at("class_names").get<std::vector<std::string>>();
  r.meta.source_ids = meta.at("source_ids").get<std::vector<int>>();
  r.meta.extra = meta.at("extra").get<std::map<std::string, std::string>>();
  return r;
}

nlohmann::json to_json(const AggregateReport& a) {
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t c = 0; c < a.recall.size(); ++c) {
    nlohmann::json e = {{"class", c}, {"recall", summary_json(a.recall[c])}, {"f1", summary_json(a.f1[c])}};
    if (c < a.class_names.size()) e["name"] = a.class_names[c];
    classes.push_back(e);
  }
  return {{"runs", a.runs},
          {"per_class", classes},
          {"macro_recall", summary_json(a.macro_recall)},
          {"macro_f1", summary_json(a.macro_f1)},
          {"fault_macro_recall", summary_json(a.fault_macro_recall)},
          {"fault_macro_f1", summary_json(a.fault_macro_f1)}};
}

std::string format_report(const EvalReport& r) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-20s %9s %9s %8s %8s %8s\n", "class", "recall", "F1", "TP", "FN", "FP");
  os << line;
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    const std::string name = c < r.meta.class_names.size() ? r.meta.class_names[c] : "class " + std::to_string(c);
    std::snprintf(line, sizeof line, "%-20s %8.2f%% %8.2f%% %8llu %8llu %8llu%s\n", name.c_str(), 100 * m.recall,
                  100 * m.f1, static_cast<unsigned long long>(m.tp), static_cast<unsigned long long>(m.fn),
                  static_cast<unsigned long long>(m.fp), m.zero_support ? "  (no support)" : "");
    os << line;
  }
  std::snprintf(line, sizeof line, "%-20s %8.2f%% %8.2f%%\n", "Average", 100 * r.macro_recall, 100 * r.macro_f1);
  os << line;
  if (r.normal_class >= 0) {
    std::snprintf(line, sizeof line, "%-20s %8.2f%% %8.2f%%\n", "Average (faults)", 100 * r.fault_macro_recall,
                  100 * r.fault_macro_f1);
    os << line;
  }
  return os.str();
}

}  // namespace qdm
