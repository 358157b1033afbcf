#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qdm/error.hpp"
#include "qdm/experiment.hpp"

using namespace qdm;

namespace {

const char* kSmall = R"(
name: smoke
data:
  source: synthetic
  synthetic:
    class_count: 3
    samples_per_class: 60
    test_samples_per_class: [30, 30, 30]
    length: 8
    seed: 5
imbalance:
  classes: [2]
  count: 6
methods: [QDM, PLAIN]
repeats: 2
seed_base: 10
train:
  preset: cwru
  hidden_size: 8
  layer_count: 1
  embed_dim: 4
  epochs: 2
  steps_per_epoch: 5
  batch_size: 16
)";

std::string tmp_dir(const std::string& name) {
  const char* dir = std::getenv("QDM_TEST_TMP");
  std::filesystem::path p = dir ? dir : std::filesystem::temp_directory_path();
  p /= name;
  std::filesystem::create_directories(p);
  return p.string();
}

}  // namespace

TEST_CASE("config parsing") {
  const ExperimentConfig c = parse_experiment_config(kSmall);
  CHECK(c.name == "smoke");
  CHECK(c.data.synthetic.class_count == 3);
  CHECK(c.data.synthetic.samples_per_class == std::vector<std::size_t>{60, 60, 60});
  CHECK(c.data.resolved_window() == 8);
  CHECK(c.imbalance.count == std::size_t{6});
  CHECK(c.train.hidden_size == 8);
  CHECK(c.train.loss.margin == 5.0);  // from the cwru preset
  CHECK(c.train.learning_rate == 5e-2);
  CHECK(c.repeats == 2);

  const ExperimentConfig again = parse_experiment_config(kSmall);
  CHECK(again.hash() == c.hash());
  const ExperimentConfig empty = parse_experiment_config("");
  CHECK(empty.methods.size() == 4);
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_experiment_config("bogus: 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("train:\n  hiden_size: 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("data:\n  source: matlab\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("methods: [QDM, SVM]\n"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config("train: [1, 2\n"), ParseError);
  try {
    parse_experiment_config("data:\n  synthetic:\n    nois: 0.1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("nois") != std::string::npos);
  }
}

TEST_CASE("overrides") {
  ExperimentConfig c = parse_experiment_config(kSmall);
  apply_override(c, "train.loss.beta=0.01");
  CHECK(c.train.loss.beta == 0.01);
  CHECK(c.train.hidden_size == 8);
  apply_override(c, "repeats=3");
  CHECK(c.repeats == 3);
  apply_override(c, "methods=[PLAIN]");
  CHECK(c.methods == std::vector<std::string>{"PLAIN"});
  apply_override(c, "train.preset=te");
  CHECK(c.train.hidden_size == 100);
  CHECK_THROWS_AS(apply_override(c, "nonsense"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "train.colour=red"), ConfigError);
}

TEST_CASE("method labels") {
  CHECK(method_label("QDM") == "LSTM-QDM");
  CHECK(method_label("PLAIN") == "LSTM");
  CHECK(method_label("SIAMESE") == "LSTM-SIAM");
  CHECK(method_label("TRIPLET") == "LSTM-Triplet");
  CHECK(method_label("OVERSAMPLE") == "Oversample-LSTM");
  CHECK(method_label("BALANCED") == "Balanced-LSTM");
}

TEST_CASE("repeat preparation") {
  ExperimentConfig c = parse_experiment_config(kSmall);
  c.validation_fraction = 0.2;
  const SplitData split = load_split(c.data);
  const RepeatData r0 = prepare_repeat(c, split, 0);
  const RepeatData r1 = prepare_repeat(c, split, 1);
  CHECK(r0.seed == 10);
  CHECK(r1.seed == 11);
  CHECK(r0.test.size() == split.test.size());
  CHECK(r0.test.labels() == split.test.labels());
  CHECK(r0.balanced.size() == split.train.size());
  REQUIRE(r0.validation.has_value());
  CHECK(r0.train.size() + r0.validation->size() == 60 + 60 + 6);
  CHECK(r0.train.imbalance_set() == std::set<int>{2});
  CHECK_FALSE(r0.train.same_content(r1.train));
  // Normalization is fitted on the training split and shared by every split.
  REQUIRE(r0.train.normalization().has_value());
  CHECK(r0.test.normalization() == r0.train.normalization());
  CHECK(r0.balanced.normalization() == r0.train.normalization());
}

TEST_CASE("scenario smoke run") {
  const ExperimentConfig c = parse_experiment_config(kSmall);
  const ScenarioResult r = run_scenario(c);
  CHECK(r.columns == std::vector<std::string>{"LSTM-QDM", "LSTM"});
  REQUIRE(r.cells.size() == 2);
  for (const auto& col : r.cells) {
    REQUIRE(col.size() == 2);
    for (const auto& cell : col) {
      CHECK(cell.ok);
      CHECK(cell.report.samples == 90);
      CHECK(cell.history.size() == 10);
    }
  }
  CHECK(r.minority_classes == std::vector<int>{2});
  CHECK(r.test_class_counts == std::vector<std::size_t>{30, 30, 30});

  const std::string table = r.table();
  for (const char* row : {"Class 2 recall", "Average recall", "Class 2 F1", "Average F1", "LSTM-QDM"})
    CHECK(table.find(row) != std::string::npos);
  CHECK(table.find("(faults)") == std::string::npos);
  CHECK(r.raw_csv().find("column,repeat,seed,ok,minority_recall,macro_recall,macro_f1") == 0);

  const ScenarioResult back = ScenarioResult::from_json(r.to_json());
  CHECK(back.table() == table);
  CHECK(back.to_json() == r.to_json());

  const std::string dir = tmp_dir("bundle");
  write_bundle(r, dir);
  for (const char* f : {"result.json", "table.txt", "table.csv", "raw.csv"})
    CHECK(std::filesystem::exists(std::filesystem::path(dir) / f));
}

TEST_CASE("scenario tables are deterministic across worker counts") {
  ExperimentConfig c = parse_experiment_config(kSmall);
  c.repeats = 1;
  const std::string a = run_scenario(c).table();
  setenv("QDM_WORKERS", "3", 1);
  CHECK(worker_count() == 3);
  const std::string b = run_scenario(c).table();
  unsetenv("QDM_WORKERS");
  CHECK(a == b);
}

TEST_CASE("failing cells are recorded, not fatal") {
  ExperimentConfig c = parse_experiment_config(kSmall);
  c.repeats = 1;
  c.imbalance.classes = {1, 2};
  c.data.synthetic.class_count = 3;
  // With classes 1 and 2 imbalanced, class 0 anchors have no negative.
  const ScenarioResult r = run_scenario(c);
  CHECK_FALSE(r.cells[0][0].ok);
  CHECK(r.cells[0][0].error.find("no negative class") != std::string::npos);
  CHECK(r.cells[1][0].ok);
  CHECK(r.table().find("LSTM-QDM") != std::string::npos);
}

TEST_CASE("multi-minority and normal-class table rows") {
  ExperimentConfig c = parse_experiment_config(kSmall);
  c.repeats = 1;
  c.methods = {"PLAIN"};
  c.data.synthetic.class_count = 4;
  c.data.synthetic.samples_per_class = {40, 40, 40, 40};
  c.data.synthetic_test_per_class = {10, 10, 10, 10};
  c.imbalance.classes = {2, 3};
  const std::string t = run_scenario(c).table();
  for (const char* row : {"Class 2 recall", "Class 3 recall", "Class 2 F1", "Class 3 F1", "Average recall"})
    CHECK(t.find(row) != std::string::npos);
}

TEST_CASE("ablation presets and beta cells") {
  const QuadrupletLossConfig base = QuadrupletLossConfig::cwru_defaults();
  const QuadrupletLossConfig a = ablation_preset("A", base);
  CHECK(a.minor_margin == a.margin);
  CHECK(a.lambda_pos == 1.0);
  const QuadrupletLossConfig b = ablation_preset("B", base);
  CHECK(b.minor_margin == b.margin);
  CHECK(b.lambda_pos == base.lambda_pos);
  const QuadrupletLossConfig cc = ablation_preset("C", base);
  CHECK(cc.minor_margin == base.minor_margin);
  CHECK(cc.lambda_minor == 1.0);
  CHECK(ablation_preset("D", base).minor_margin == base.minor_margin);
  CHECK_THROWS_AS(ablation_preset("E", base), ConfigError);

  ExperimentConfig c = parse_experiment_config(kSmall);
  c.repeats = 1;
  c.ablation.presets = {"A", "D"};
  c.ablation.betas = {0.0, 1e-3};
  const ScenarioResult r = run_ablation(c);
  CHECK(r.columns == std::vector<std::string>{"preset A", "preset D", "beta=0", "beta=0.001"});
  for (const auto& col : r.cells) CHECK(col[0].ok);

  // The beta = 0 cell follows the PLAIN trajectory exactly.
  ExperimentConfig p = c;
  p.methods = {"PLAIN"};
  const ScenarioResult plain = run_scenario(p);
  const auto& h0 = r.cells[2][0].history;
  const auto& hp = plain.cells[0][0].history;
  REQUIRE(h0.size() == hp.size());
  for (std::size_t i = 0; i < h0.size(); ++i) CHECK(h0[i].total == hp[i].total);
  CHECK(r.cells[2][0].report.macro_recall == plain.cells[0][0].report.macro_recall);
}
