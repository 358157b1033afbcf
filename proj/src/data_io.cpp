#include "qdm/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <regex>
#include <sstream>

#include "qdm/container.hpp"
#include "qdm/error.hpp"
#include "qdm/rng.hpp"

namespace qdm {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  const bool comma = line.find(',') != std::string::npos;
  for (char ch : line) {
    const bool sep = comma ? ch == ',' : std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (sep) {
      if (comma || !cur.empty()) out.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (comma || !cur.empty()) out.push_back(trim(cur));
  return out;
}

bool parse_double(const std::string& text, double& out) {
  std::string t = trim(text);
  if (t.empty()) return false;
  if (t.front() == '+') t.erase(0, 1);
  const char* b = t.data();
  const char* e = b + t.size();
  auto [p, ec] = std::from_chars(b, e, out);
  return ec == std::errc() && p == e && std::isfinite(out);
}

double field_value(const std::string& field, const std::string& path, std::size_t line_no) {
  double v = 0.0;
  if (!parse_double(field, v))
    throw ParseError(path + ":" + std::to_string(line_no) + ": '" + field + "' is not a finite number");
  return v;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

void check_fault_ids(const std::vector<int>& fault_ids) {
  if (fault_ids.empty()) throw ConfigError("no TE fault ids selected");
  std::set<int> seen;
  for (int f : fault_ids) {
    if (f < 1 || f > 21) throw ConfigError("unknown TE fault id " + std::to_string(f) + " (valid: 1-21)");
    if (!seen.insert(f).second) throw ConfigError("TE fault id " + std::to_string(f) + " listed twice");
  }
}

int te_class_of(int fault, const std::vector<int>& fault_ids, bool keep_normal) {
  auto it = std::find(fault_ids.begin(), fault_ids.end(), fault);
  if (it == fault_ids.end()) return kUnlabelled;
  return static_cast<int>(it - fault_ids.begin()) + (keep_normal ? 1 : 0);
}

RawRun make_te_run(std::vector<double> values, std::size_t rows, std::size_t cols, int fault,
                   const std::vector<int>& fault_ids, const TeOptions& opts, const std::string& source) {
  RawRun run;
  run.matrix = SeriesMatrix(rows, cols, std::move(values));
  run.source_id = fault;
  run.source = source;
  const std::size_t prefix = opts.normal_prefix ? *opts.normal_prefix : te_normal_prefix(rows);
  if (prefix > rows) throw ConfigError(source + ": normal prefix " + std::to_string(prefix) + " exceeds run length");
  const int normal = opts.keep_normal ? 0 : kUnlabelled;
  const int fault_class = fault == 0 ? normal : te_class_of(fault, fault_ids, opts.keep_normal);
  run.labels.assign(rows, fault_class);
  for (std::size_t r = 0; r < prefix; ++r) run.labels[r] = normal;
  return run;
}

std::optional<int> fault_from_filename(const std::string& path) {
  static const std::regex re(R"(d(\d\d?)(_te)?\.(dat|csv|txt)$)", std::regex::icase);
  std::smatch m;
  const std::string name = std::filesystem::path(path).filename().string();
  if (std::regex_search(name, m, re)) return std::stoi(m[1].str());
  return std::nullopt;
}

}  // namespace

std::size_t te_normal_prefix(std::size_t run_length) {
  switch (run_length) {
    case 500: return 20;
    case 960: return 160;
    case 480: return 0;
    default:
      throw ConfigError("TE run of " + std::to_string(run_length) +
                        " rows has no known normal prefix (expected 500, 960 or 480); set normal_prefix");
  }
}

LabelMap te_label_map(const std::vector<int>& fault_ids, bool keep_normal) {
  LabelMap m;
  if (keep_normal) {
    m.source_ids.push_back(0);
    m.names.push_back("Normal");
  }
  for (int f : fault_ids) {
    m.source_ids.push_back(f);
    m.names.push_back("Fault " + std::to_string(f));
  }
  return m;
}

std::vector<RawRun> load_te_csv(const std::string& path, const std::vector<int>& fault_ids, const TeOptions& opts) {
  check_fault_ids(fault_ids);
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  // Find the first non-blank line; it is a header when any field is non-numeric.
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw ParseError(path + ": empty file");
  std::vector<std::string> first = split_fields(line);
  bool has_header = false;
  for (const auto& f : first) {
    double v;
    if (!parse_double(f, v)) has_header = true;
  }

  std::vector<RawRun> runs;
  if (!has_header) {
    int fault = -1;
    if (opts.fault_id) fault = *opts.fault_id;
    else if (auto f = fault_from_filename(path)) fault = *f;
    else throw ConfigError(path + ": headerless TE file needs a fault id (name it dNN.dat or pass fault_id)");
    if (fault != 0 && te_class_of(fault, fault_ids, opts.keep_normal) == kUnlabelled)
      throw ConfigError(path + ": fault " + std::to_string(fault) + " is not among the selected faults");
    const std::size_t cols = first.size();
    std::vector<double> values;
    std::size_t rows = 0;
    auto add_row = [&](const std::vector<std::string>& fields, std::size_t ln) {
      if (fields.size() != cols)
        throw ParseError(path + ":" + std::to_string(ln) + ": expected " + std::to_string(cols) + " fields, got " +
                         std::to_string(fields.size()));
      for (const auto& f : fields) values.push_back(field_value(f, path, ln));
      ++rows;
    };
    add_row(first, line_no);
    while (std::getline(in, line)) {
      ++line_no;
      if (trim(line).empty()) continue;
      add_row(split_fields(line), line_no);
    }
    runs.push_back(make_te_run(std::move(values), rows, cols, fault, fault_ids, opts, path));
    return runs;
  }

  header = std::move(first);
  int col_fault = -1, col_run = -1, col_sample = -1;
  std::vector<std::size_t> measure_cols;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string h = lower(header[i]);
    h.erase(std::remove(h.begin(), h.end(), '"'), h.end());
    if (h == "faultnumber" || h == "fault") col_fault = static_cast<int>(i);
    else if (h == "simulationrun" || h == "run") col_run = static_cast<int>(i);
    else if (h == "sample") col_sample = static_cast<int>(i);
    else if (!h.empty()) measure_cols.push_back(i);
  }
  if (col_fault < 0) throw ParseError(path + ": header lacks a faultNumber column");
  if (measure_cols.empty()) throw ParseError(path + ": header has no measurement columns");

  // Runs keyed by (fault, simulation run) in order of first appearance.
  std::map<std::pair<int, long long>, std::size_t> run_of;
  struct Pending {
    int fault;
    long long sim;
    std::vector<double> values;
    std::size_t rows = 0;
  };
  std::vector<Pending> pending;
  std::size_t data_rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " fields, got " + std::to_string(fields.size()));
    ++data_rows;
    const double fv = field_value(fields[static_cast<std::size_t>(col_fault)], path, line_no);
    const int fault = static_cast<int>(fv);
    if (fault != fv || fault < 0 || fault > 21)
      throw ParseError(path + ":" + std::to_string(line_no) + ": invalid fault number " +
                       fields[static_cast<std::size_t>(col_fault)]);
    const long long sim =
        col_run < 0 ? 0 : static_cast<long long>(field_value(fields[static_cast<std::size_t>(col_run)], path, line_no));
    if (col_sample >= 0) field_value(fields[static_cast<std::size_t>(col_sample)], path, line_no);
    const bool wanted = fault == 0 ? opts.keep_normal : te_class_of(fault, fault_ids, false) != kUnlabelled;
    std::vector<double> row;
    row.reserve(measure_cols.size());
    for (std::size_t c : measure_cols) row.push_back(field_value(fields[c], path, line_no));
    if (!wanted) continue;
    auto key = std::make_pair(fault, sim);
    auto it = run_of.find(key);
    if (it == run_of.end()) {
      it = run_of.emplace(key, pending.size()).first;
      pending.push_back({fault, sim, {}, 0});
    }
    Pending& p = pending[it->second];
    p.values.insert(p.values.end(), row.begin(), row.end());
    ++p.rows;
  }
  if (data_rows == 0) throw ParseError(path + ": no data rows");
  for (auto& p : pending) {
    runs.push_back(make_te_run(std::move(p.values), p.rows, measure_cols.size(), p.fault, fault_ids, opts,
                               path + "#fault" + std::to_string(p.fault) + "/run" + std::to_string(p.sim)));
  }
  return runs;
}

WindowedDataset windows_from_runs(const std::vector<RawRun>& runs, std::size_t window, std::size_t step,
                                  int class_count, const LabelMap* labels) {
  if (window == 0 || step == 0) throw ContractError("window and step must be positive");
  std::vector<std::shared_ptr<const SeriesMatrix>> storage;
  std::vector<WindowRef> refs;
  std::vector<int> y;
  for (const auto& run : runs) {
    if (run.labels.size() != run.matrix.rows) throw ContractError(run.source + ": one label per row required");
    const std::size_t n = window_count(run.matrix.rows, window, step);
    if (n == 0) continue;
    const std::size_t run_index = storage.size();
    bool used = false;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t start = k * step;
      const int label = run.labels[start + window - 1];
      if (label == kUnlabelled) continue;
      refs.push_back({run_index, start});
      y.push_back(label);
      used = true;
    }
    if (used) storage.push_back(std::make_shared<const SeriesMatrix>(run.matrix));
  }
  if (refs.empty()) throw ContractError("no labelled windows of length " + std::to_string(window));
  WindowedDataset ds(std::move(storage), std::move(refs), std::move(y), window, class_count);
  if (labels) ds.set_label_map(*labels);
  return ds;
}

int cwru_label(const std::string& location, double diameter_in) {
  const std::string l = lower(trim(location));
  if (l == "normal" || l == "n") return 0;
  int base;
  if (l == "ball" || l == "b" || l == "bd") base = 1;
  else if (l == "inner" || l == "inner race" || l == "ir") base = 4;
  else if (l == "outer" || l == "outer race" || l == "or") base = 7;
  else throw ConfigError("unknown CWRU fault location '" + location + "'");
  const long thousandths = std::lround(diameter_in * 1000.0);
  if (std::abs(diameter_in * 1000.0 - static_cast<double>(thousandths)) > 1e-6)
    throw ConfigError("unknown CWRU defect diameter " + std::to_string(diameter_in));
  switch (thousandths) {
    case 7: return base;
    case 14: return base + 1;
    case 21:
    case 22: return base + 2;
    default: throw ConfigError("unknown CWRU defect diameter " + std::to_string(diameter_in));
  }
}

LabelMap cwru_label_map() {
  LabelMap m;
  m.source_ids = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  m.names = {"Normal"};
  for (int k = 1; k <= 9; ++k) m.names.push_back("Fault " + std::to_string(k));
  return m;
}

std::vector<double> read_signal(const std::string& path) {
  {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open '" + path + "'");
    char magic[8] = {};
    probe.read(magic, 8);
    if (probe.gcount() == 8 && std::string(magic, 8) == "QDMSIGNL")
      return Container::read(path, "QDMSIGNL").f64("signal");
  }
  std::ifstream in(path);
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    out.push_back(field_value(t, path, line_no));
  }
  if (out.empty()) throw ParseError(path + ": empty signal");
  return out;
}

void write_signal(const std::string& path, const std::vector<double>& signal) {
  Container c;
  c.header["kind"] = "signal";
  c.put("signal", std::vector<double>(signal));
  c.write(path, "QDMSIGNL");
}

WindowedDataset signal_windows(std::vector<double> signal, int label, std::size_t window, std::size_t step,
                               int class_count) {
  if (window == 0 || step == 0) throw ContractError("window and step must be positive");
  if (signal.size() < window)
    throw ContractError("signal of length " + std::to_string(signal.size()) + " is shorter than window " +
                        std::to_string(window));
  if (label < 0 || label >= class_count) throw ConfigError("signal label " + std::to_string(label) + " out of range");
  const std::size_t n = signal.size();
  auto raw = std::make_shared<const SeriesMatrix>(n, 1, std::move(signal));
  std::vector<int> labels(n, label);
  return make_windows(raw, labels, window, step, class_count);
}

WindowedDataset load_signal(const std::string& path, int label, std::size_t window, std::size_t step,
                            int class_count) {
  WindowedDataset ds = signal_windows(read_signal(path), label, window, step, class_count);
  if (class_count == 10) ds.set_label_map(cwru_label_map());
  return ds;
}

// ---- synthetic -----------------------------------------------------------------

std::vector<ClassRegime> SyntheticConfig::default_regimes(int class_count) {
  std::vector<ClassRegime> r;
  for (int k = 0; k < class_count; ++k)
    r.push_back({0.04 * (k % 2 == 0 ? k : -k), 1.0 + 0.25 * k, 0.35 + 0.2 * k});
  return r;
}

std::vector<ClassRegime> SyntheticConfig::resolved_regimes() const {
  return regimes.empty() ? default_regimes(class_count) : regimes;
}

void SyntheticConfig::validate() const {
  if (class_count < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (!regimes.empty() && static_cast<int>(regimes.size()) != class_count)
    throw ConfigError("synthetic data: one regime per class required");
  if (static_cast<int>(samples_per_class.size()) != class_count)
    throw ConfigError("synthetic data: samples_per_class must list every class");
  if (length == 0 || channels == 0) throw ConfigError("synthetic data: length and channels must be positive");
  if (noise < 0 || phase_jitter < 0 || amplitude_jitter < 0 || slope_jitter < 0)
    throw ConfigError("synthetic data: noise and jitter must be nonnegative");
  const auto r = resolved_regimes();
  for (std::size_t a = 0; a < r.size(); ++a)
    for (std::size_t b = a + 1; b < r.size(); ++b)
      if (r[a].slope == r[b].slope && r[a].amplitude == r[b].amplitude && r[a].frequency == r[b].frequency)
        throw ConfigError("synthetic classes " + std::to_string(a) + " and " + std::to_string(b) +
                          " share a regime");
}

std::vector<RawRun> generate_synthetic(const SyntheticConfig& synth) {
  synth.validate();
  const auto regimes = synth.resolved_regimes();
  std::vector<RawRun> runs;
  for (int k = 0; k < synth.class_count; ++k) {
    const ClassRegime& g = regimes[static_cast<std::size_t>(k)];
    for (std::size_t s = 0; s < synth.samples_per_class[static_cast<std::size_t>(k)]; ++s) {
      Rng rng = Rng::derive(synth.seed, {tag(Stream::kSynthetic), static_cast<std::uint64_t>(k), s});
      const double phi = synth.phase_jitter * rng.uniform(-1.0, 1.0);
      const double amp = g.amplitude * (1.0 + synth.amplitude_jitter * rng.uniform(-1.0, 1.0));
      const double slope = g.slope * (1.0 + synth.slope_jitter * rng.uniform(-1.0, 1.0));
      std::vector<double> v(synth.length * synth.channels);
      for (std::size_t t = 0; t < synth.length; ++t)
        for (std::size_t j = 0; j < synth.channels; ++j) {
          const double td = static_cast<double>(t);
          v[t * synth.channels + j] = slope * td +
                                     amp * std::sin(g.frequency * td + phi + synth.channel_shift * static_cast<double>(j)) +
                                     (synth.noise > 0 ? synth.noise * rng.normal() : 0.0);
        }
      RawRun run;
      run.matrix = SeriesMatrix(synth.length, synth.channels, std::move(v));
      run.labels.assign(synth.length, k);
      run.source_id = k;
      run.source = "synthetic/class" + std::to_string(k) + "/" + std::to_string(s);
      runs.push_back(std::move(run));
    }
  }
  return runs;
}

WindowedDataset synthetic_dataset(const SyntheticConfig& synth) {
  synth.validate();
  // All sequences share one storage block; window i starts at row i*length.
  const auto runs = generate_synthetic(synth);
  std::vector<double> values;
  values.reserve(runs.size() * synth.length * synth.channels);
  std::vector<WindowRef> refs;
  std::vector<int> labels;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    values.insert(values.end(), runs[i].matrix.values.begin(), runs[i].matrix.values.end());
    refs.push_back({0, i * synth.length});
    labels.push_back(runs[i].labels.back());
  }
  auto block = std::make_shared<const SeriesMatrix>(runs.size() * synth.length, synth.channels, std::move(values));
  WindowedDataset ds({block}, std::move(refs), std::move(labels), synth.length, synth.class_count);
  LabelMap m;
  for (int k = 0; k < synth.class_count; ++k) {
    m.source_ids.push_back(k);
    m.names.push_back("Class " + std::to_string(k));
  }
  ds.set_label_map(m);
  return ds;
}

double nearest_centroid_accuracy(const WindowedDataset& fit, const WindowedDataset& score) {
  if (fit.empty() || score.empty()) throw ContractError("nearest_centroid_accuracy: empty dataset");
  if (fit.window_length() != score.window_length() || fit.feature_count() != score.feature_count())
    throw DimensionError("nearest_centroid_accuracy: window shapes differ");
  const std::size_t W = fit.window_length(), m = fit.feature_count(), d = W * m;
  const int C = std::max(fit.class_count(), score.class_count());
  std::vector<double> centroid(static_cast<std::size_t>(C) * d, 0.0);
  std::vector<std::size_t> count(static_cast<std::size_t>(C), 0);
  for (std::size_t i = 0; i < fit.size(); ++i) {
    const auto c = static_cast<std::size_t>(fit.label(i));
    ++count[c];
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t f = 0; f < m; ++f) centroid[c * d + t * m + f] += fit.value(i, t, f);
  }
  for (std::size_t c = 0; c < count.size(); ++c)
    for (std::size_t k = 0; k < d; ++k)
      if (count[c]) centroid[c * d + k] /= static_cast<double>(count[c]);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    int best = -1;
    double best_d = 0.0;
    for (int c = 0; c < C; ++c) {
      if (!count[static_cast<std::size_t>(c)]) continue;
      double dist = 0.0;
      for (std::size_t t = 0; t < W; ++t)
        for (std::size_t f = 0; f < m; ++f) {
          const double diff = score.value(i, t, f) - centroid[static_cast<std::size_t>(c) * d + t * m + f];
          dist += diff * diff;
        }
      if (best < 0 || dist < best_d) {
        best = c;
        best_d = dist;
      }
    }
    if (best == score.label(i)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(score.size());
}

// ---- container -------------------------------------------------------------------

void save_dataset(const std::string& path, const WindowedDataset& ds) {
  Container c;
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t r = 0; r < ds.runs().size(); ++r) {
    runs.push_back({{"rows", ds.runs()[r]->rows}, {"cols", ds.runs()[r]->cols}});
    c.put("run." + std::to_string(r), std::vector<double>(ds.runs()[r]->values));
  }
  c.header["kind"] = "windowed_dataset";
  c.header["runs"] = runs;
  c.header["window_length"] = ds.window_length();
  c.header["class_count"] = ds.class_count();
  c.header["label_map"] = {{"source_ids", ds.label_map().source_ids}, {"names", ds.label_map().names}};
  c.header["imbalance_set"] = std::vector<int>(ds.imbalance_set().begin(), ds.imbalance_set().end());
  c.header["fingerprint"] = ds.fingerprint();
  if (ds.normalization()) {
    const auto& n = *ds.normalization();
    c.header["normalization"] = {{"fitted_on", n.fitted_on}};
    c.put("normalization.mean", std::vector<double>(n.mean));
    c.put("normalization.stddev", std::vector<double>(n.stddev));
  }
  std::vector<std::int64_t> win, lab;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    win.push_back(static_cast<std::int64_t>(ds.window(i).run));
    win.push_back(static_cast<std::int64_t>(ds.window(i).start));
    lab.push_back(ds.label(i));
  }
  c.put("windows", std::move(win));
  c.put("labels", std::move(lab));
  c.write(path, "QDMDATA1");
}

WindowedDataset load_dataset(const std::string& path) {
  const Container c = Container::read(path, "QDMDATA1");
  try {
    std::vector<std::shared_ptr<const SeriesMatrix>> runs;
    const auto& rj = c.header.at("runs");
    for (std::size_t r = 0; r < rj.size(); ++r)
      runs.push_back(std::make_shared<const SeriesMatrix>(rj[r].at("rows").get<std::size_t>(),
                                                          rj[r].at("cols").get<std::size_t>(),
                                                          c.f64("run." + std::to_string(r))));
    const auto& win = c.i64("windows");
    const auto& lab = c.i64("labels");
    if (win.size() != 2 * lab.size()) throw ParseError(path + ": window table does not match labels");
    std::vector<WindowRef> refs;
    std::vector<int> labels;
    for (std::size_t i = 0; i < lab.size(); ++i) {
      if (win[2 * i] < 0 || win[2 * i + 1] < 0) throw ParseError(path + ": negative window offset");
      refs.push_back({static_cast<std::size_t>(win[2 * i]), static_cast<std::size_t>(win[2 * i + 1])});
      labels.push_back(static_cast<int>(lab[i]));
    }
    WindowedDataset ds(std::move(runs), std::move(refs), std::move(labels),
                       c.header.at("window_length").get<std::size_t>(), c.header.at("class_count").get<int>());
    LabelMap m;
    m.source_ids = c.header.at("label_map").at("source_ids").get<std::vector<int>>();
    m.names = c.header.at("label_map").at("names").get<std::vector<std::string>>();
    ds.set_label_map(std::move(m));
    const auto imb = c.header.at("imbalance_set").get<std::vector<int>>();
    ds.set_imbalance_set(std::set<int>(imb.begin(), imb.end()));
    if (c.header.contains("normalization")) {
      NormalizationStats n;
      n.fitted_on = c.header.at("normalization").at("fitted_on").get<std::string>();
      n.mean = c.f64("normalization.mean");
      n.stddev = c.f64("normalization.stddev");
      ds.set_normalization(std::move(n));
    }
    if (c.header.contains("fingerprint") && c.header.at("fingerprint").get<std::string>() != ds.fingerprint())
      throw ParseError(path + ": content does not match its recorded fingerprint");
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed dataset header: " + e.what());
  }
}

}  // namespace qdm
