// lstm_qdm: ingest data, train and evaluate models, run scenarios and ablations.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qdm/data_io.hpp"
#include "qdm/error.hpp"
#include "qdm/evaluate.hpp"
#include "qdm/experiment.hpp"
#include "qdm/trainer.hpp"

using nlohmann::json;
using namespace qdm;

namespace {

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_experiment_config(path);
  for (const auto& s : sets) apply_override(cfg, s);
  cfg.validate();
  return cfg;
}

json dataset_summary(const WindowedDataset& ds) {
  json counts = json::array();
  for (const auto& members : ds.class_index()) counts.push_back(members.size());
  return {{"windows", ds.size()},
          {"window_length", ds.window_length()},
          {"features", ds.feature_count()},
          {"class_count", ds.class_count()},
          {"class_counts", counts},
          {"class_names", ds.label_map().names},
          {"source_ids", ds.label_map().source_ids},
          {"fingerprint", ds.fingerprint()}};
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("'" + item + "' is not an integer");
    }
  }
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LSTM with quadruplet deep metric learning for imbalanced fault diagnosis"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Convert TE CSV, CWRU signals or synthetic data to a dataset file");
  std::string in_source = "te", in_out, in_config, in_split = "train", in_faults, in_location;
  std::vector<std::string> in_files;
  std::size_t in_window = 0, in_step = 0;
  int in_label = -1;
  double in_diameter = 0.0;
  bool in_keep_normal = false;
  ingest->add_option("--source", in_source, "te, signal or synthetic")->check(CLI::IsMember({"te", "signal", "synthetic"}));
  ingest->add_option("--files", in_files, "Input files");
  ingest->add_option("--out,-o", in_out, "Output dataset file")->required();
  ingest->add_option("--faults", in_faults, "TE fault ids, comma separated (default 1,5,6,8,12,16,20)");
  ingest->add_flag("--keep-normal", in_keep_normal, "Keep TE normal rows as class 0");
  ingest->add_option("--window", in_window, "Window length");
  ingest->add_option("--step", in_step, "Window step");
  ingest->add_option("--label", in_label, "Class id of every signal window");
  ingest->add_option("--location", in_location, "CWRU fault location (Normal, Ball, Inner, Outer)");
  ingest->add_option("--diameter", in_diameter, "CWRU defect diameter in inches");
  ingest->add_option("--config", in_config, "Experiment config (synthetic source)");
  ingest->add_option("--split", in_split, "train or test (synthetic source)")->check(CLI::IsMember({"train", "test"}));

  // train
  auto* trn = app.add_subcommand("train", "Train one model");
  std::string tr_data, tr_config, tr_method, tr_out, tr_log, tr_ckpt, tr_resume, tr_val;
  std::vector<std::string> tr_sets;
  std::int64_t tr_seed = -1;
  std::size_t tr_stop_after = 0;
  trn->add_option("--data", tr_data, "Training dataset file")->required();
  trn->add_option("--config,-c", tr_config, "Experiment config (train section and overrides are used)");
  trn->add_option("--set", tr_sets, "Override config key, e.g. train.epochs=5");
  trn->add_option("--method", tr_method, "QDM, PLAIN, SIAMESE, TRIPLET or OVERSAMPLE");
  trn->add_option("--seed", tr_seed, "Seed (default: seed_base)");
  trn->add_option("--validation", tr_val, "Validation dataset for early stopping");
  trn->add_option("--out,-o", tr_out, "Output model file")->required();
  trn->add_option("--log", tr_log, "Line-delimited JSON training log");
  trn->add_option("--checkpoint", tr_ckpt, "Write a checkpoint here after every epoch");
  trn->add_option("--resume", tr_resume, "Resume from this checkpoint");
  trn->add_option("--stop-after-epochs", tr_stop_after, "Stop after this many epochs in this invocation");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Evaluate a model on a dataset");
  std::string ev_model, ev_data, ev_out;
  int ev_normal = -1;
  ev->add_option("--model,-m", ev_model, "Model file")->required();
  ev->add_option("--data", ev_data, "Dataset file")->required();
  ev->add_option("--normal-class", ev_normal, "Class excluded from the fault-only averages");
  ev->add_option("--out,-o", ev_out, "Write the JSON report here");

  // scenario / ablate
  auto* sc = app.add_subcommand("scenario", "Run a method comparison over repeats");
  auto* ab = app.add_subcommand("ablate", "Run the A-D presets and beta grid");
  std::string sc_config, sc_out;
  std::vector<std::string> sc_sets;
  for (auto* cmd : {sc, ab}) {
    cmd->add_option("--config,-c", sc_config, "Experiment config")->required();
    cmd->add_option("--set", sc_sets, "Override config key, e.g. repeats=3");
    cmd->add_option("--out,-o", sc_out, "Output directory (default: output_dir from config)");
  }

  // report
  auto* rep = app.add_subcommand("report", "Print the table of a result bundle or an evaluation report");
  std::string rep_in;
  rep->add_option("input", rep_in, "result.json or report JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*ingest) {
      WindowedDataset ds;
      if (in_source == "te") {
        if (in_files.empty()) throw ConfigError("--files is required for TE ingestion");
        const std::vector<int> faults = in_faults.empty() ? kTeFaults : parse_int_list(in_faults);
        TeOptions opts;
        opts.keep_normal = in_keep_normal;
        std::vector<RawRun> runs;
        for (const auto& f : in_files)
          for (auto& r : load_te_csv(f, faults, opts)) runs.push_back(std::move(r));
        const LabelMap labels = te_label_map(faults, in_keep_normal);
        ds = windows_from_runs(runs, in_window ? in_window : 100, in_step ? in_step : 1,
                               static_cast<int>(labels.size()), &labels);
      } else if (in_source == "signal") {
        if (in_files.empty()) throw ConfigError("--files is required for signal ingestion");
        const int label = in_label >= 0 ? in_label : cwru_label(in_location.empty() ? "normal" : in_location, in_diameter);
        std::vector<WindowedDataset> parts;
        for (const auto& f : in_files) parts.push_back(load_signal(f, label, in_window ? in_window : 400, in_step ? in_step : 32));
        ds = WindowedDataset::concat(parts);
        ds.set_label_map(cwru_label_map());
      } else {
        ExperimentConfig cfg = load_config(in_config, {});
        if (cfg.data.source != "synthetic") throw ConfigError("config data.source is not synthetic");
        const SplitData split = load_split(cfg.data);
        ds = in_split == "train" ? split.train : split.test;
      }
      save_dataset(in_out, ds);
      json summary = dataset_summary(ds);
      summary["path"] = in_out;
      std::cout << summary.dump(2) << "\n";
    } else if (*trn) {
      ExperimentConfig cfg = load_config(tr_config, tr_sets);
      WindowedDataset train = load_dataset(tr_data);
      std::optional<WindowedDataset> val;
      if (!tr_val.empty()) val = load_dataset(tr_val);
      std::optional<NormalizationStats> stats;
      if (cfg.data.normalize && !train.normalization()) {
        stats = fit_normalization(train);
        const std::set<int> imb = train.imbalance_set();
        train = apply_normalization(train, *stats);
        train.set_imbalance_set(imb);
        if (val) val = apply_normalization(*val, *stats);
      } else if (train.normalization()) {
        stats = train.normalization();
      }
      const std::uint64_t seed = tr_seed >= 0 ? static_cast<std::uint64_t>(tr_seed) : cfg.seed_base;
      TrainConfig tc = method_config(cfg, tr_method.empty() ? to_string(cfg.train.method) : tr_method, seed,
                                     std::max(train.class_count(), cfg.train.class_count));
      tc.validate();
      const WindowedDataset* vptr = val ? &*val : nullptr;
      Trainer trainer = tr_resume.empty() ? Trainer(train, tc, vptr)
                                          : Trainer::resume(Checkpoint::load(tr_resume), train, tc, vptr);
      std::ofstream log;
      if (!tr_log.empty()) {
        log.open(tr_log, tr_resume.empty() ? std::ios::trunc : std::ios::app);
        if (!log) throw IoError("cannot open log '" + tr_log + "'");
      }
      std::size_t epochs_here = 0;
      while (!trainer.finished() && (tr_stop_after == 0 || epochs_here < tr_stop_after)) {
        const std::size_t before = trainer.history().size();
        trainer.run_epoch();
        ++epochs_here;
        if (log)
          for (std::size_t i = before; i < trainer.history().size(); ++i) log << trainer.history()[i].to_json().dump() << "\n";
        if (!tr_ckpt.empty()) trainer.checkpoint().save(tr_ckpt);
      }
      const TrainResult res = trainer.result();
      save_model(tr_out, res.model, tc.hash(), stats ? &*stats : nullptr);
      json out = {{"model", tr_out},
                  {"method", to_string(tc.method)},
                  {"config_hash", tc.hash()},
                  {"seed", tc.seed},
                  {"steps", trainer.current_step()},
                  {"epochs", trainer.current_epoch()},
                  {"finished", trainer.finished()},
                  {"stopped_early", res.stopped_early},
                  {"final_loss", res.history.empty() ? 0.0 : res.history.back().total},
                  {"train_fingerprint", train.fingerprint()}};
      std::cout << out.dump(2) << "\n";
    } else if (*ev) {
      std::string hash;
      std::optional<NormalizationStats> stats;
      const ModelParams model = load_model(ev_model, &hash, &stats);
      WindowedDataset ds = load_dataset(ev_data);
      if (stats && !ds.normalization()) ds = apply_normalization(ds, *stats);
      EvalReport r = evaluate(model, ds, ev_normal);
      r.meta.config_hash = hash;
      if (!ev_out.empty()) {
        std::ofstream out(ev_out);
        if (!out) throw IoError("cannot write '" + ev_out + "'");
        out << to_json(r).dump(2) << "\n";
      }
      std::cout << format_report(r);
    } else if (*sc || *ab) {
      const ExperimentConfig cfg = load_config(sc_config, sc_sets);
      const ScenarioResult r = *sc ? run_scenario(cfg) : run_ablation(cfg);
      const std::string dir = sc_out.empty() ? cfg.output_dir : sc_out;
      if (!dir.empty()) write_bundle(r, dir);
      std::cout << r.table();
      std::size_t failed = 0;
      for (const auto& col : r.cells)
        for (const auto& cell : col) failed += cell.ok ? 0 : 1;
      if (failed) {
        for (std::size_t c = 0; c < r.cells.size(); ++c)
          for (const auto& cell : r.cells[c])
            if (!cell.ok)
              std::cerr << json{{"warning", {{"column", r.columns[c]}, {"repeat", cell.repeat}, {"error", cell.error}}}}.dump()
                        << "\n";
      }
    } else if (*rep) {
      const json j = json::parse(read_file(rep_in));
      if (j.contains("columns")) std::cout << ScenarioResult::from_json(j).table();
      else std::cout << format_report(eval_report_from_json(j));
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", {{"kind", e.kind()}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const json::exception& e) {
    std::cerr << json{{"error", {{"kind", "parse"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
  return 0;
}
