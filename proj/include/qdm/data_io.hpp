#pragma once

// Ingestion of TE-style CSV runs and CWRU-style 1-D signals, the synthetic
// sequence generator, and the on-disk dataset container.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qdm/dataset.hpp"

namespace qdm {

// One recorded run: [n x m] readings with a class id per row. Rows labelled
// kUnlabelled (e.g. a TE normal prefix when normals are dropped) never
// produce windows.
struct RawRun {
  SeriesMatrix matrix;
  std::vector<int> labels;
  int source_id = 0;
  std::string source;
};

inline constexpr int kUnlabelled = -1;

// The seven TE faults used for case 1.
inline const std::vector<int> kTeFaults = {1, 5, 6, 8, 12, 16, 20};

struct TeOptions {
  // Keep normal rows as class 0 (faults then start at 1).
  bool keep_normal = false;
  // Forced normal-prefix length; by default derived from the run length
  // (500 -> 20, 960 -> 160, 480 -> 0).
  std::optional<std::size_t> normal_prefix;
  // Fault number of a headerless file; parsed from names like d08.dat or
  // d08_te.dat when absent.
  std::optional<int> fault_id;
};

// Label map for the TE class ids produced under the given options.
LabelMap te_label_map(const std::vector<int>& fault_ids, bool keep_normal);
std::size_t te_normal_prefix(std::size_t run_length);

// Reads one TE CSV file. Two layouts are accepted: a header with
// faultNumber/simulationRun/sample columns followed by the measurements
// (runs are split on faultNumber and simulationRun), or headerless
// whitespace/comma separated numeric rows forming a single run.
std::vector<RawRun> load_te_csv(const std::string& path, const std::vector<int>& fault_ids,
                                const TeOptions& opts = {});

// Window every run and keep windows whose last row is labelled.
WindowedDataset windows_from_runs(const std::vector<RawRun>& runs, std::size_t window, std::size_t step,
                                  int class_count, const LabelMap* labels = nullptr);

// CWRU label of a (location, diameter) pair: Normal 0, Ball 1-3, Inner race
// 4-6, Outer race 7-9 for diameters 0.007/0.014/0.021 in. Throws ConfigError
// for anything else.
int cwru_label(const std::string& location, double diameter_in = 0.0);
// Names "Normal", "Fault 1" .. "Fault 9".
LabelMap cwru_label_map();

// 1-D signal: text with one value per line, or a QDMSIGNL container holding
// an f64 buffer named "signal". Every window carries `label`.
std::vector<double> read_signal(const std::string& path);
WindowedDataset load_signal(const std::string& path, int label, std::size_t window = 400, std::size_t step = 32,
                            int class_count = 10);
WindowedDataset signal_windows(std::vector<double> signal, int label, std::size_t window, std::size_t step,
                               int class_count);
void write_signal(const std::string& path, const std::vector<double>& signal);

// Class k produces x[t][j] = a_k * t + b_k * sin(w_k * t + phi + j * channel_shift) + noise.
struct ClassRegime {
  double slope = 0.0;
  double amplitude = 1.0;
  double frequency = 0.5;
};

struct SyntheticConfig {
  int class_count = 4;
  std::vector<ClassRegime> regimes;  // empty: default_regimes(class_count)
  std::vector<std::size_t> samples_per_class = {500, 500, 500, 500};
  std::size_t length = 20;
  std::size_t channels = 2;
  double noise = 0.3;
  double channel_shift = 0.7;
  // Per-sequence uniform jitter of phase (radians), amplitude and slope
  // (relative). Zero gives sequences that differ only by noise.
  double phase_jitter = 0.0;
  double amplitude_jitter = 0.0;
  double slope_jitter = 0.0;
  std::uint64_t seed = 0;

  static std::vector<ClassRegime> default_regimes(int class_count);
  void validate() const;
  std::vector<ClassRegime> resolved_regimes() const;
};

// One run per sequence, length synth.length.
std::vector<RawRun> generate_synthetic(const SyntheticConfig& synth);
// The generated sequences as a dataset, one window per sequence.
WindowedDataset synthetic_dataset(const SyntheticConfig& synth);

// Accuracy of a nearest-centroid classifier (centroids fitted on fit, scored
// on score) over the flattened windows. Used as a separability check.
double nearest_centroid_accuracy(const WindowedDataset& fit, const WindowedDataset& score);

// Dataset container ("QDMDATA1"): runs, windows, labels, label map,
// imbalance set and normalization stats. Reloading is bit-exact.
void save_dataset(const std::string& path, const WindowedDataset& ds);
WindowedDataset load_dataset(const std::string& path);

}  // namespace qdm
