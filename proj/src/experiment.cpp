#include "qdm/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <yaml-cpp/yaml.h>

#include "qdm/error.hpp"
#include "qdm/evaluate.hpp"

namespace qdm {

namespace {

using json = nlohmann::json;

// ---- YAML -> JSON ----------------------------------------------------------------

json scalar_to_json(const YAML::Node& n) {
  const std::string s = n.Scalar();
  if (n.Tag() == "!") return s;  // quoted
  if (s == "true" || s == "True" || s == "yes") return true;
  if (s == "false" || s == "False" || s == "no") return false;
  if (s == "null" || s == "~" || s.empty()) return nullptr;
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) return v;
  } catch (const std::exception&) {
  }
  return s;
}

json yaml_to_json(const YAML::Node& n) {
  switch (n.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined: return nullptr;
    case YAML::NodeType::Scalar: return scalar_to_json(n);
    case YAML::NodeType::Sequence: {
      json a = json::array();
      for (const auto& item : n) a.push_back(yaml_to_json(item));
      return a;
    }
    case YAML::NodeType::Map: {
      json o = json::object();
      for (const auto& kv : n) o[kv.first.as<std::string>()] = yaml_to_json(kv.second);
      return o;
    }
  }
  return nullptr;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ConfigError("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& dst, const std::string& where) {
  if (!j.contains(key) || j.at(key).is_null()) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

json train_to_json(const TrainConfig& t) { return t.to_json(); }

TrainConfig train_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a mapping");
  const json known = TrainConfig{}.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key()) && it.key() != "preset")
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
  json base;
  const std::string preset = j.value("preset", "te");
  if (preset == "te") base = te_train_config().to_json();
  else if (preset == "cwru") base = cwru_train_config().to_json();
  else throw ConfigError(where + ".preset must be 'te' or 'cwru'");
  json patch = j;
  patch.erase("preset");
  base.merge_patch(patch);
  try {
    return TrainConfig::from_json(base);
  } catch (const json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

ExperimentConfig from_json(const json& j) {
  check_keys(j,
             {"name", "data", "imbalance", "methods", "train", "method_overrides", "repeats", "seed_base",
              "validation_fraction", "output_dir", "ablation"},
             "experiment");
  ExperimentConfig c;
  read(j, "name", c.name, "experiment");
  read(j, "methods", c.methods, "experiment");
  read(j, "repeats", c.repeats, "experiment");
  read(j, "seed_base", c.seed_base, "experiment");
  read(j, "validation_fraction", c.validation_fraction, "experiment");
  read(j, "output_dir", c.output_dir, "experiment");
  if (j.contains("train")) c.train = train_from_json(j.at("train"), "train");
  if (j.contains("method_overrides")) {
    const auto& mo = j.at("method_overrides");
    if (!mo.is_object()) throw ConfigError("method_overrides must be a mapping");
    for (auto it = mo.begin(); it != mo.end(); ++it) c.method_overrides[it.key()] = it.value();
  }
  if (j.contains("imbalance") && !j.at("imbalance").is_null()) {
    const auto& im = j.at("imbalance");
    check_keys(im, {"classes", "by_source", "ratio", "count"}, "imbalance");
    read(im, "classes", c.imbalance.classes, "imbalance");
    read(im, "by_source", c.imbalance.by_source, "imbalance");
    if (im.contains("ratio") && !im.at("ratio").is_null()) c.imbalance.ratio = im.at("ratio").get<double>();
    if (im.contains("count") && !im.at("count").is_null()) c.imbalance.count = im.at("count").get<std::size_t>();
  }
  if (j.contains("ablation") && !j.at("ablation").is_null()) {
    const auto& ab = j.at("ablation");
    check_keys(ab, {"presets", "betas"}, "ablation");
    read(ab, "presets", c.ablation.presets, "ablation");
    read(ab, "betas", c.ablation.betas, "ablation");
  }
  if (j.contains("data")) {
    const auto& d = j.at("data");
    check_keys(d, {"source", "window", "step", "normalize", "synthetic", "te", "cwru", "container"}, "data");
    DataConfig& dc = c.data;
    read(d, "source", dc.source, "data");
    read(d, "window", dc.window, "data");
    read(d, "step", dc.step, "data");
    read(d, "normalize", dc.normalize, "data");
    if (d.contains("synthetic")) {
      const auto& s = d.at("synthetic");
      check_keys(s,
                 {"class_count", "samples_per_class", "test_samples_per_class", "test_seed_offset", "length",
                  "channels", "noise", "channel_shift", "phase_jitter", "amplitude_jitter", "slope_jitter", "seed",
                  "regimes"},
                 "data.synthetic");
      SyntheticConfig& sp = dc.synthetic;
      read(s, "class_count", sp.class_count, "data.synthetic");
      if (!s.contains("samples_per_class") && s.contains("class_count"))
        sp.samples_per_class.assign(static_cast<std::size_t>(sp.class_count), 500);
      if (s.contains("samples_per_class")) {
        const auto& spc = s.at("samples_per_class");
        if (spc.is_number())
          sp.samples_per_class.assign(static_cast<std::size_t>(sp.class_count), spc.get<std::size_t>());
        else
          read(s, "samples_per_class", sp.samples_per_class, "data.synthetic");
      }
      if (s.contains("test_samples_per_class")) {
        const auto& spc = s.at("test_samples_per_class");
        if (spc.is_number())
          dc.synthetic_test_per_class.assign(static_cast<std::size_t>(sp.class_count), spc.get<std::size_t>());
        else
          read(s, "test_samples_per_class", dc.synthetic_test_per_class, "data.synthetic");
      }
      read(s, "test_seed_offset", dc.synthetic_test_seed_offset, "data.synthetic");
      read(s, "length", sp.length, "data.synthetic");
      read(s, "channels", sp.channels, "data.synthetic");
      read(s, "noise", sp.noise, "data.synthetic");
      read(s, "channel_shift", sp.channel_shift, "data.synthetic");
      read(s, "phase_jitter", sp.phase_jitter, "data.synthetic");
      read(s, "amplitude_jitter", sp.amplitude_jitter, "data.synthetic");
      read(s, "slope_jitter", sp.slope_jitter, "data.synthetic");
      read(s, "seed", sp.seed, "data.synthetic");
      if (s.contains("regimes")) {
        sp.regimes.clear();
        for (const auto& r : s.at("regimes")) {
          check_keys(r, {"slope", "amplitude", "frequency"}, "data.synthetic.regimes");
          ClassRegime g;
          read(r, "slope", g.slope, "regime");
          read(r, "amplitude", g.amplitude, "regime");
          read(r, "frequency", g.frequency, "regime");
          sp.regimes.push_back(g);
        }
      }
    }
    if (d.contains("te")) {
      const auto& t = d.at("te");
      check_keys(t, {"train_files", "test_files", "faults", "keep_normal"}, "data.te");
      read(t, "train_files", dc.train_files, "data.te");
      read(t, "test_files", dc.test_files, "data.te");
      read(t, "faults", dc.te_faults, "data.te");
      read(t, "keep_normal", dc.te_keep_normal, "data.te");
    }
    if (d.contains("cwru")) {
      const auto& cw = d.at("cwru");
      check_keys(cw, {"train", "test"}, "data.cwru");
      auto signals = [](const json& list, const std::string& where) {
        std::vector<SignalSource> out;
        if (!list.is_array()) throw ConfigError(where + " must be a list");
        for (const auto& s : list) {
          check_keys(s, {"path", "label", "location", "diameter"}, where);
          SignalSource src;
          src.path = s.at("path").get<std::string>();
          if (s.contains("label")) src.label = s.at("label").get<int>();
          else src.label = cwru_label(s.value("location", std::string("normal")), s.value("diameter", 0.0));
          out.push_back(src);
        }
        return out;
      };
      if (cw.contains("train")) dc.train_signals = signals(cw.at("train"), "data.cwru.train");
      if (cw.contains("test")) dc.test_signals = signals(cw.at("test"), "data.cwru.test");
    }
    if (d.contains("container")) {
      const auto& k = d.at("container");
      check_keys(k, {"train", "test"}, "data.container");
      read(k, "train", dc.train_container, "data.container");
      read(k, "test", dc.test_container, "data.container");
    }
  }
  return c;
}

json synthetic_to_json(const DataConfig& d) {
  const SyntheticConfig& s = d.synthetic;
  json regimes = json::array();
  for (const auto& r : s.regimes) regimes.push_back({{"slope", r.slope}, {"amplitude", r.amplitude}, {"frequency", r.frequency}});
  json j = {{"class_count", s.class_count},
            {"samples_per_class", s.samples_per_class},
            {"test_seed_offset", d.synthetic_test_seed_offset},
            {"length", s.length},
            {"channels", s.channels},
            {"noise", s.noise},
            {"channel_shift", s.channel_shift},
            {"phase_jitter", s.phase_jitter},
            {"amplitude_jitter", s.amplitude_jitter},
            {"slope_jitter", s.slope_jitter},
            {"seed", s.seed}};
  if (!s.regimes.empty()) j["regimes"] = regimes;
  if (!d.synthetic_test_per_class.empty()) j["test_samples_per_class"] = d.synthetic_test_per_class;
  return j;
}

void set_path(json& j, const std::string& dotted, json value) {
  json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("malformed override key '" + dotted + "'");
    if (dot == std::string::npos) {
      (*cur)[key] = std::move(value);
      return;
    }
    if (!cur->contains(key) || !(*cur)[key].is_object()) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    start = dot + 1;
  }
}

std::string fnv_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

bool is_known_method(const std::string& m) {
  if (m == "BALANCED") return true;
  try {
    parse_method(m);
    return true;
  } catch (const ConfigError&) {
    return false;
  }
}

std::string canonical_method(const std::string& m) {
  std::string u = m;
  std::transform(u.begin(), u.end(), u.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (u == "BALANCED" || u == "BALANCED-LSTM") return "BALANCED";
  return to_string(parse_method(m));
}

}  // namespace

// ---- config ------------------------------------------------------------------------

std::size_t DataConfig::resolved_window() const {
  if (window) return window;
  if (source == "synthetic") return synthetic.length;
  if (source == "te") return 100;
  if (source == "cwru") return 400;
  return 0;
}

std::size_t DataConfig::resolved_step() const {
  if (step) return step;
  if (source == "cwru") return 32;
  return 1;
}

void ExperimentConfig::validate() const {
  if (repeats < 1) throw ConfigError("repeats must be at least 1");
  if (methods.empty()) throw ConfigError("no methods listed");
  for (const auto& m : methods)
    if (!is_known_method(m)) throw ConfigError("unknown method '" + m + "'");
  for (const auto& [m, _] : method_overrides)
    if (!is_known_method(m)) throw ConfigError("method_overrides names unknown method '" + m + "'");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0))
    throw ConfigError("validation_fraction must lie in [0, 1)");
  const std::set<std::string> sources = {"synthetic", "te", "cwru", "container"};
  if (!sources.count(data.source)) throw ConfigError("unknown data source '" + data.source + "'");
  if (data.source == "synthetic") {
    data.synthetic.validate();
    if (!data.synthetic_test_per_class.empty() &&
        static_cast<int>(data.synthetic_test_per_class.size()) != data.synthetic.class_count)
      throw ConfigError("test_samples_per_class must list every class");
  }
  if (data.source == "te") {
    if (data.train_files.empty() || data.test_files.empty()) throw ConfigError("TE source needs train and test files");
  }
  if (data.source == "cwru" && (data.train_signals.empty() || data.test_signals.empty()))
    throw ConfigError("CWRU source needs train and test signals");
  if (data.source == "container" && (data.train_container.empty() || data.test_container.empty()))
    throw ConfigError("container source needs train and test paths");
  if (!imbalance.classes.empty()) {
    if (imbalance.ratio.has_value() == imbalance.count.has_value())
      throw ConfigError("imbalance needs exactly one of ratio or count");
    if (imbalance.ratio && !(*imbalance.ratio > 0.0 && *imbalance.ratio <= 1.0))
      throw ConfigError("imbalance ratio must lie in (0, 1]");
  }
  for (const auto& p : ablation.presets)
    if (p != "A" && p != "B" && p != "C" && p != "D") throw ConfigError("unknown ablation preset '" + p + "'");
  for (double b : ablation.betas)
    if (!(b >= 0.0)) throw ConfigError("ablation betas must be nonnegative");
  TrainConfig t = train;
  t.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  json overrides = json::object();
  for (const auto& [k, v] : method_overrides) overrides[k] = v;
  json signals_train = json::array(), signals_test = json::array();
  for (const auto& s : data.train_signals) signals_train.push_back({{"path", s.path}, {"label", s.label}});
  for (const auto& s : data.test_signals) signals_test.push_back({{"path", s.path}, {"label", s.label}});
  json im = {{"classes", imbalance.classes}, {"by_source", imbalance.by_source}};
  if (imbalance.ratio) im["ratio"] = *imbalance.ratio;
  if (imbalance.count) im["count"] = *imbalance.count;
  return {{"name", name},
          {"data",
           {{"source", data.source},
            {"window", data.window},
            {"step", data.step},
            {"normalize", data.normalize},
            {"synthetic", synthetic_to_json(data)},
            {"te",
             {{"train_files", data.train_files},
              {"test_files", data.test_files},
              {"faults", data.te_faults},
              {"keep_normal", data.te_keep_normal}}},
            {"cwru", {{"train", signals_train}, {"test", signals_test}}},
            {"container", {{"train", data.train_container}, {"test", data.test_container}}}}},
          {"imbalance", im},
          {"methods", methods},
          {"train", train_to_json(train)},
          {"method_overrides", overrides},
          {"repeats", repeats},
          {"seed_base", seed_base},
          {"validation_fraction", validation_fraction},
          {"output_dir", output_dir},
          {"ablation", {{"presets", ablation.presets}, {"betas", ablation.betas}}}};
}

std::string ExperimentConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  return fnv_hex(j.dump());
}

ExperimentConfig parse_experiment_config(const std::string& yaml_text) {
  json j;
  try {
    const YAML::Node root = YAML::Load(yaml_text);
    j = yaml_to_json(root);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("config is not valid YAML: ") + e.what());
  }
  if (j.is_null()) j = json::object();
  ExperimentConfig c = from_json(j);
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  json value;
  try {
    value = yaml_to_json(YAML::Load(assignment.substr(eq + 1)));
  } catch (const YAML::Exception& e) {
    throw ConfigError("override '" + assignment + "': " + e.what());
  }
  json j = cfg.to_json();
  // Train keys are stored in full; a preset override must reset them.
  if (key == "train.preset") {
    j["train"] = json{{"preset", value}};
  } else {
    set_path(j, key, value);
  }
  ExperimentConfig next = from_json(j);
  next.validate();
  cfg = std::move(next);
}

std::string method_label(const std::string& method) {
  const std::string m = canonical_method(method);
  if (m == "QDM") return "LSTM-QDM";
  if (m == "PLAIN") return "LSTM";
  if (m == "SIAMESE") return "LSTM-SIAM";
  if (m == "TRIPLET") return "LSTM-Triplet";
  if (m == "OVERSAMPLE") return "Oversample-LSTM";
  return "Balanced-LSTM";
}

// ---- data ---------------------------------------------------------------------------

SplitData load_split(const DataConfig& d) {
  const std::size_t W = d.resolved_window(), s = d.resolved_step();
  if (d.source == "synthetic") {
    SyntheticConfig train = d.synthetic;
    SyntheticConfig test = d.synthetic;
    test.seed = d.synthetic.seed + d.synthetic_test_seed_offset;
    if (!d.synthetic_test_per_class.empty()) test.samples_per_class = d.synthetic_test_per_class;
    return {synthetic_dataset(train), synthetic_dataset(test)};
  }
  if (d.source == "te") {
    const LabelMap labels = te_label_map(d.te_faults, d.te_keep_normal);
    const int C = static_cast<int>(labels.size());
    TeOptions opts;
    opts.keep_normal = d.te_keep_normal;
    auto load = [&](const std::vector<std::string>& files) {
      std::vector<RawRun> runs;
      for (const auto& f : files) {
        auto part = load_te_csv(f, d.te_faults, opts);
        for (auto& r : part) runs.push_back(std::move(r));
      }
      return windows_from_runs(runs, W, s, C, &labels);
    };
    return {load(d.train_files), load(d.test_files)};
  }
  if (d.source == "cwru") {
    auto load = [&](const std::vector<SignalSource>& sigs) {
      std::vector<WindowedDataset> parts;
      for (const auto& sig : sigs) parts.push_back(load_signal(sig.path, sig.label, W, s, 10));
      WindowedDataset ds = WindowedDataset::concat(parts);
      ds.set_label_map(cwru_label_map());
      return ds;
    };
    return {load(d.train_signals), load(d.test_signals)};
  }
  return {load_dataset(d.train_container), load_dataset(d.test_container)};
}

RepeatData prepare_repeat(const ExperimentConfig& cfg, const SplitData& split, std::size_t repeat) {
  RepeatData out;
  out.seed = cfg.seed_base + repeat;
  WindowedDataset train = split.train;
  if (!cfg.imbalance.classes.empty()) {
    std::map<int, ImbalanceTarget> targets;
    for (int c : cfg.imbalance.classes) {
      int cls = c;
      if (cfg.imbalance.by_source) {
        const auto& ids = split.train.label_map().source_ids;
        auto it = std::find(ids.begin(), ids.end(), c);
        if (it == ids.end()) throw ConfigError("imbalance names source id " + std::to_string(c) + ", not in the data");
        cls = static_cast<int>(it - ids.begin());
      }
      if (cls < 0 || cls >= split.train.class_count())
        throw ConfigError("imbalance class " + std::to_string(cls) + " out of range");
      if (cfg.imbalance.ratio) targets[cls] = KeepFraction{*cfg.imbalance.ratio};
      else targets[cls] = *cfg.imbalance.count;
    }
    Rng rng = Rng::derive(out.seed, {tag(Stream::kImbalance)});
    train = apply_imbalance(train, targets, rng);
  }
  if (cfg.validation_fraction > 0.0) {
    // Stratified hold-out; every class keeps at least one training sample.
    Rng rng = Rng::derive(out.seed, {tag(Stream::kValidation)});
    std::vector<std::size_t> keep, held;
    for (const auto& members : train.class_index()) {
      std::vector<std::size_t> idx = members;
      for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.index(i)]);
      std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(idx.size())));
      if (n_val >= idx.size()) n_val = idx.size() - 1;
      held.insert(held.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
      keep.insert(keep.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    }
    std::sort(keep.begin(), keep.end());
    std::sort(held.begin(), held.end());
    const std::set<int> imb = train.imbalance_set();
    WindowedDataset val = train.subset(held);
    train = train.subset(keep);
    train.set_imbalance_set(imb);
    val.set_imbalance_set({});
    out.validation = std::move(val);
  }
  WindowedDataset balanced = split.train;
  WindowedDataset test = split.test;
  if (cfg.data.normalize) {
    const NormalizationStats stats = fit_normalization(train);
    const std::set<int> imb = train.imbalance_set();
    train = apply_normalization(train, stats);
    train.set_imbalance_set(imb);
    balanced = apply_normalization(balanced, stats);
    test = apply_normalization(test, stats);
    if (out.validation) out.validation = apply_normalization(*out.validation, stats);
  }
  out.train = std::move(train);
  out.balanced = std::move(balanced);
  out.test = std::move(test);
  return out;
}

// ---- cells ---------------------------------------------------------------------------

TrainConfig method_config(const ExperimentConfig& cfg, const std::string& method, std::uint64_t seed,
                          int class_count) {
  const std::string m = canonical_method(method);
  json j = cfg.train.to_json();
  for (const auto& [name, patch] : cfg.method_overrides)
    if (canonical_method(name) == m) j.merge_patch(patch);
  TrainConfig t = TrainConfig::from_json(j);
  t.method = m == "BALANCED" ? Method::kPlain : parse_method(m);
  t.seed = seed;
  t.class_count = class_count;
  return t;
}

CellResult run_cell(const ExperimentConfig& cfg, const RepeatData& data, const std::string& method,
                    const TrainConfig& tc, std::size_t repeat, const std::string& variant) {
  CellResult r;
  r.method = canonical_method(method);
  r.variant = variant;
  r.repeat = repeat;
  r.seed = tc.seed;
  r.config_hash = tc.hash();
  try {
    const WindowedDataset& train = r.method == "BALANCED" ? data.balanced : data.train;
    const WindowedDataset* val = data.validation ? &*data.validation : nullptr;
    TrainResult tr = qdm::train(train, tc, val);
    r.report = evaluate(tr.model, data.test, cfg.data.source == "cwru" || cfg.data.te_keep_normal ? 0 : -1);
    r.report.meta.seed = tc.seed;
    r.report.meta.config_hash = r.config_hash;
    r.report.meta.extra["method"] = r.method;
    r.report.meta.extra["train_fingerprint"] = train.fingerprint();
    r.report.meta.extra["epochs_run"] = std::to_string(tr.epochs_run);
    r.report.meta.extra["optimizer"] = to_string(tc.optimizer);
    r.report.meta.extra["stopped_early"] = tr.stopped_early ? "true" : "false";
    if (!variant.empty()) r.report.meta.extra["variant"] = variant;
    r.epochs_run = tr.epochs_run;
    r.history = std::move(tr.history);
    r.ok = true;
  } catch (const std::exception& e) {
    r.ok = false;
    r.error = e.what();
  }
  return r;
}

std::size_t worker_count() {
  const char* v = std::getenv("QDM_WORKERS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (*end != '\0' || n < 1) throw ConfigError(std::string("QDM_WORKERS must be a positive integer, got '") + v + "'");
  return static_cast<std::size_t>(n);
}

namespace {

struct Column {
  std::string label;
  std::string method;
  std::optional<QuadrupletLossConfig> loss;
  bool relaxed = false;
};

ScenarioResult run_columns(const ExperimentConfig& cfg, const SplitData& split, const std::vector<Column>& columns,
                           const std::string& name) {
  cfg.validate();
  ScenarioResult res;
  res.name = name;
  res.config_hash = cfg.hash();
  res.test_fingerprint = split.test.fingerprint();
  for (const auto& members : split.test.class_index()) res.test_class_counts.push_back(members.size());
  res.class_names = split.train.label_map().names;
  res.normal_class = cfg.data.source == "cwru" || cfg.data.te_keep_normal ? 0 : -1;
  for (const auto& c : columns) res.columns.push_back(c.label);

  std::vector<RepeatData> repeats;
  for (std::size_t r = 0; r < cfg.repeats; ++r) {
    repeats.push_back(prepare_repeat(cfg, split, r));
    res.train_fingerprints.push_back(repeats.back().train.fingerprint());
    // The evaluation split is never touched by the imbalance scenario.
    if (repeats.back().test.size() != split.test.size())
      throw ContractError("test split size changed during preparation");
  }
  for (int c : repeats.front().train.imbalance_set()) res.minority_classes.push_back(c);

  res.cells.assign(columns.size(), std::vector<CellResult>(cfg.repeats));
  const std::size_t total = columns.size() * cfg.repeats;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= total) return;
      const std::size_t col = k % columns.size(), rep = k / columns.size();
      const Column& c = columns[col];
      const RepeatData& data = repeats[rep];
      CellResult cell;
      try {
        TrainConfig tc = method_config(cfg, c.method, data.seed, data.train.class_count());
        if (c.loss) {
          tc.loss = *c.loss;
          tc.relaxed_loss_constraints = tc.relaxed_loss_constraints || c.relaxed;
        }
        cell = run_cell(cfg, data, c.method, tc, rep, c.loss ? c.label : "");
      } catch (const std::exception& e) {
        cell.method = c.method;
        cell.variant = c.label;
        cell.repeat = rep;
        cell.seed = data.seed;
        cell.error = e.what();
      }
      res.cells[col][rep] = std::move(cell);
    }
  };
  const std::size_t n_workers = std::min(worker_count(), total);
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return res;
}

std::string pct(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << 100.0 * v << "%";
  return os.str();
}

struct Summary {
  bool any = false;
  MetricSummary value;
};

template <class F>
Summary summarize(const std::vector<CellResult>& cells, F metric) {
  std::vector<double> v;
  for (const auto& c : cells)
    if (c.ok) v.push_back(metric(c.report));
  Summary s;
  if (v.empty()) return s;
  s.any = true;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  s.value.mean = mean;
  s.value.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

struct Row {
  std::string label;
  std::function<double(const EvalReport&)> metric;
};

std::vector<Row> table_rows(const ScenarioResult& r, bool fault_rows = false) {
  std::vector<Row> rows;
  auto name = [&](int c) {
    return static_cast<std::size_t>(c) < r.class_names.size() ? r.class_names[static_cast<std::size_t>(c)]
                                                              : "Class " + std::to_string(c);
  };
  auto recall = [](int c) { return [c](const EvalReport& e) { return e.per_class[static_cast<std::size_t>(c)].recall; }; };
  auto f1 = [](int c) { return [c](const EvalReport& e) { return e.per_class[static_cast<std::size_t>(c)].f1; }; };
  const Row avg_recall{"Average recall", [](const EvalReport& e) { return e.macro_recall; }};
  const Row avg_f1{"Average F1", [](const EvalReport& e) { return e.macro_f1; }};
  if (r.minority_classes.size() == 1) {
    const int c = r.minority_classes.front();
    rows.push_back({name(c) + " recall", recall(c)});
    rows.push_back(avg_recall);
    rows.push_back({name(c) + " F1", f1(c)});
    rows.push_back(avg_f1);
  } else {
    for (int c : r.minority_classes) {
      rows.push_back({name(c) + " recall", recall(c)});
      rows.push_back({name(c) + " F1", f1(c)});
    }
    rows.push_back(avg_recall);
    rows.push_back(avg_f1);
  }
  if (fault_rows && r.normal_class >= 0) {
    rows.push_back({"Average recall (faults)", [](const EvalReport& e) { return e.fault_macro_recall; }});
    rows.push_back({"Average F1 (faults)", [](const EvalReport& e) { return e.fault_macro_f1; }});
  }
  return rows;
}

}  // namespace

ScenarioResult run_scenario(const ExperimentConfig& cfg) { return run_scenario(cfg, load_split(cfg.data)); }

ScenarioResult run_scenario(const ExperimentConfig& cfg, const SplitData& split) {
  std::vector<Column> columns;
  for (const auto& m : cfg.methods) columns.push_back({method_label(m), canonical_method(m), std::nullopt, false});
  return run_columns(cfg, split, columns, cfg.name);
}

QuadrupletLossConfig ablation_preset(const std::string& preset, const QuadrupletLossConfig& base) {
  QuadrupletLossConfig c = base;
  if (preset == "A" || preset == "B") c.minor_margin = c.margin;
  if (preset == "A" || preset == "C") {
    c.lambda_pos = 1.0;
    c.lambda_minor = 1.0;
  }
  if (preset != "A" && preset != "B" && preset != "C" && preset != "D")
    throw ConfigError("unknown ablation preset '" + preset + "'");
  return c;
}

ScenarioResult run_ablation(const ExperimentConfig& cfg) { return run_ablation(cfg, load_split(cfg.data)); }

ScenarioResult run_ablation(const ExperimentConfig& cfg, const SplitData& split) {
  if (cfg.ablation.presets.empty() && cfg.ablation.betas.empty())
    throw ConfigError("ablation needs presets or betas");
  const QuadrupletLossConfig base = method_config(cfg, "QDM", cfg.seed_base, split.train.class_count()).loss;
  std::vector<Column> columns;
  for (const auto& p : cfg.ablation.presets) columns.push_back({"preset " + p, "QDM", ablation_preset(p, base), true});
  for (double b : cfg.ablation.betas) {
    QuadrupletLossConfig c = base;
    c.beta = b;
    std::ostringstream os;
    os << "beta=" << b;
    columns.push_back({os.str(), "QDM", c, false});
  }
  return run_columns(cfg, split, columns, cfg.name + " (ablation)");
}

// ---- output ---------------------------------------------------------------------------

nlohmann::json ScenarioResult::to_json() const {
  json cols = json::array();
  for (std::size_t c = 0; c < columns.size(); ++c) {
    json runs = json::array();
    std::vector<EvalReport> ok;
    for (const auto& cell : cells[c]) {
      json jr = {{"repeat", cell.repeat}, {"seed", cell.seed}, {"ok", cell.ok}, {"config_hash", cell.config_hash}};
      if (cell.ok) {
        jr["report"] = qdm::to_json(cell.report);
        jr["epochs_run"] = cell.epochs_run;
        ok.push_back(cell.report);
      } else {
        jr["error"] = cell.error;
      }
      runs.push_back(jr);
    }
    json col = {{"label", columns[c]}, {"runs", runs}, {"failed", cells[c].size() - ok.size()}};
    if (!ok.empty()) col["aggregate"] = qdm::to_json(aggregate(ok));
    cols.push_back(col);
  }
  return {{"name", name},
          {"config_hash", config_hash},
          {"columns", cols},
          {"minority_classes", minority_classes},
          {"class_names", class_names},
          {"normal_class", normal_class},
          {"train_fingerprints", train_fingerprints},
          {"test_fingerprint", test_fingerprint},
          {"test_class_counts", test_class_counts}};
}

ScenarioResult ScenarioResult::from_json(const nlohmann::json& j) {
  ScenarioResult r;
  try {
    r.name = j.at("name").get<std::string>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.minority_classes = j.at("minority_classes").get<std::vector<int>>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.normal_class = j.at("normal_class").get<int>();
    r.train_fingerprints = j.at("train_fingerprints").get<std::vector<std::string>>();
    r.test_fingerprint = j.at("test_fingerprint").get<std::string>();
    r.test_class_counts = j.at("test_class_counts").get<std::vector<std::size_t>>();
    for (const auto& col : j.at("columns")) {
      r.columns.push_back(col.at("label").get<std::string>());
      std::vector<CellResult> cells;
      for (const auto& run : col.at("runs")) {
        CellResult c;
        c.repeat = run.at("repeat").get<std::size_t>();
        c.seed = run.at("seed").get<std::uint64_t>();
        c.ok = run.at("ok").get<bool>();
        c.config_hash = run.value("config_hash", "");
        if (c.ok) {
          c.report = eval_report_from_json(run.at("report"));
          c.epochs_run = run.value("epochs_run", std::size_t{0});
          c.method = c.report.meta.extra.count("method") ? c.report.meta.extra.at("method") : "";
        } else {
          c.error = run.value("error", "");
        }
        cells.push_back(std::move(c));
      }
      r.cells.push_back(std::move(cells));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed scenario result: ") + e.what());
  }
  return r;
}

std::string ScenarioResult::table() const {
  const auto rows = table_rows(*this);
  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> head = {""};
  for (const auto& c : columns) head.push_back(c);
  grid.push_back(head);
  for (const auto& row : rows) {
    std::vector<std::string> line = {row.label};
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Summary s = summarize(cells[c], row.metric);
      line.push_back(s.any ? pct(s.value.mean) : "failed");
    }
    grid.push_back(line);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& line : grid)
    for (std::size_t i = 0; i < line.size(); ++i) width[i] = std::max(width[i], line[i].size());
  std::ostringstream os;
  os << name << "\n";
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t i = 0; i < grid[r].size(); ++i) {
      os << std::left << std::setw(static_cast<int>(width[i])) << grid[r][i];
      if (i + 1 < grid[r].size()) os << "  ";
    }
    os << "\n";
  }
  for (std::size_t c = 0; c < columns.size(); ++c) {
    std::size_t failed = 0;
    for (const auto& cell : cells[c]) failed += cell.ok ? 0 : 1;
    if (failed) os << columns[c] << ": " << failed << " of " << cells[c].size() << " runs failed\n";
  }
  return os.str();
}

std::string ScenarioResult::table_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "row,column,mean,stddev,runs\n";
  for (const auto& row : table_rows(*this, true))
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const Summary s = summarize(cells[c], row.metric);
      std::size_t ok = 0;
      for (const auto& cell : cells[c]) ok += cell.ok ? 1 : 0;
      os << '"' << row.label << "\",\"" << columns[c] << "\",";
      if (s.any) os << s.value.mean << "," << s.value.stddev;
      else os << ",";
      os << "," << ok << "\n";
    }
  return os.str();
}

std::string ScenarioResult::raw_csv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "column,repeat,seed,ok,minority_recall,macro_recall,macro_f1\n";
  for (std::size_t c = 0; c < columns.size(); ++c)
    for (const auto& cell : cells[c]) {
      os << '"' << columns[c] << "\"," << cell.repeat << "," << cell.seed << "," << (cell.ok ? 1 : 0) << ",";
      if (cell.ok) {
        double mr = 0.0;
        for (int m : minority_classes) mr += cell.report.per_class[static_cast<std::size_t>(m)].recall;
        if (!minority_classes.empty()) mr /= static_cast<double>(minority_classes.size());
        os << mr << "," << cell.report.macro_recall << "," << cell.report.macro_f1;
      } else {
        os << ",,";
      }
      os << "\n";
    }
  return os.str();
}

void write_bundle(const ScenarioResult& r, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  auto write = [&](const std::string& file, const std::string& text) {
    std::ofstream out(std::filesystem::path(dir) / file);
    if (!out) throw IoError("cannot write " + (std::filesystem::path(dir) / file).string());
    out << text;
  };
  write("result.json", r.to_json().dump(2) + "\n");
  write("table.txt", r.table());
  write("table.csv", r.table_csv());
  write("raw.csv", r.raw_csv());
}

}  // namespace qdm
