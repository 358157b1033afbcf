#pragma once

// Config-driven scenario and ablation runs.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qdm/data_io.hpp"
#include "qdm/metrics.hpp"
#include "qdm/trainer.hpp"

namespace qdm {

struct SignalSource {
  std::string path;
  int label = 0;
};

struct DataConfig {
  // synthetic | te | cwru | container
  std::string source = "synthetic";
  std::size_t window = 0;  // 0: source default (synthetic length, TE 100, CWRU 400)
  std::size_t step = 0;    // 0: source default (TE 1, CWRU 32)
  bool normalize = true;

  SyntheticConfig synthetic;
  std::vector<std::size_t> synthetic_test_per_class;  // empty: same as training
  std::uint64_t synthetic_test_seed_offset = 1000003;

  std::vector<std::string> train_files, test_files;
  std::vector<int> te_faults = kTeFaults;
  bool te_keep_normal = false;

  std::vector<SignalSource> train_signals, test_signals;

  std::string train_container, test_container;

  std::size_t resolved_window() const;
  std::size_t resolved_step() const;
};

struct ImbalanceConfig {
  // Class ids, or source ids (TE fault numbers / CWRU labels) with by_source.
  std::vector<int> classes;
  bool by_source = false;
  std::optional<double> ratio;        // kept fraction, e.g. 0.1 for 10:1
  std::optional<std::size_t> count;   // absolute kept windows per class
};

struct AblationConfig {
  std::vector<std::string> presets;  // subset of A, B, C, D
  std::vector<double> betas;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DataConfig data;
  ImbalanceConfig imbalance;
  // QDM, PLAIN, SIAMESE, TRIPLET, OVERSAMPLE, BALANCED (plain on the full
  // training split).
  std::vector<std::string> methods = {"QDM", "PLAIN", "SIAMESE", "OVERSAMPLE"};
  TrainConfig train;
  std::map<std::string, nlohmann::json> method_overrides;
  std::size_t repeats = 1;
  std::uint64_t seed_base = 0;
  double validation_fraction = 0.0;
  std::string output_dir;
  AblationConfig ablation;

  void validate() const;
  nlohmann::json to_json() const;
  std::string hash() const;
};

// YAML text -> config. Unknown keys raise ConfigError.
ExperimentConfig parse_experiment_config(const std::string& yaml_text);
ExperimentConfig load_experiment_config(const std::string& path);
// Applies "dotted.key=value" overrides (values parsed as YAML scalars/lists).
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// Column header used in tables ("LSTM-QDM", "LSTM", ...).
std::string method_label(const std::string& method);

struct SplitData {
  WindowedDataset train;  // full training split (before imbalance)
  WindowedDataset test;
};

SplitData load_split(const DataConfig& d);

struct RepeatData {
  WindowedDataset train;       // imbalanced, normalized
  WindowedDataset balanced;    // full training split, normalized with the same stats
  WindowedDataset test;        // untouched apart from normalization
  std::optional<WindowedDataset> validation;
  std::uint64_t seed = 0;
};

// Imbalanced split, normalization and validation hold-out for one repeat.
RepeatData prepare_repeat(const ExperimentConfig& cfg, const SplitData& split, std::size_t repeat);

struct CellResult {
  std::string method;
  std::string variant;  // ablation cell label; empty for scenarios
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  EvalReport report;
  std::string config_hash;
  std::size_t epochs_run = 0;
  std::vector<StepRecord> history;
};

// Training configuration for one method / cell, with overrides applied.
TrainConfig method_config(const ExperimentConfig& cfg, const std::string& method, std::uint64_t seed,
                          int class_count);
CellResult run_cell(const ExperimentConfig& cfg, const RepeatData& data, const std::string& method,
                    const TrainConfig& tc, std::size_t repeat, const std::string& variant = "");

struct ScenarioResult {
  std::string name;
  std::vector<std::string> columns;  // method or variant labels in declaration order
  std::vector<std::vector<CellResult>> cells;  // [column][repeat]
  std::vector<int> minority_classes;
  std::vector<std::string> class_names;
  int normal_class = -1;
  std::string config_hash;
  std::vector<std::string> train_fingerprints;  // per repeat
  std::string test_fingerprint;
  std::vector<std::size_t> test_class_counts;

  nlohmann::json to_json() const;
  static ScenarioResult from_json(const nlohmann::json& j);
  // Minority recall/F1 rows and Average rows, one column per method, as
  // percentages over successful repeats.
  std::string table() const;
  std::string table_csv() const;
  // Per-repeat raw values for box plots.
  std::string raw_csv() const;
};

// Worker count from QDM_WORKERS (default 1).
std::size_t worker_count();

ScenarioResult run_scenario(const ExperimentConfig& cfg);
ScenarioResult run_scenario(const ExperimentConfig& cfg, const SplitData& split);

// Presets A-D over the margin/weight constants, then one cell per beta.
QuadrupletLossConfig ablation_preset(const std::string& preset, const QuadrupletLossConfig& base);
ScenarioResult run_ablation(const ExperimentConfig& cfg);
ScenarioResult run_ablation(const ExperimentConfig& cfg, const SplitData& split);

// Writes result.json, table.txt, table.csv and raw.csv to dir.
void write_bundle(const ScenarioResult& r, const std::string& dir);

}  // namespace qdm
