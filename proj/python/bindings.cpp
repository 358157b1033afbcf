#include <algorithm>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qdm/data_io.hpp"
#include "qdm/error.hpp"
#include "qdm/evaluate.hpp"
#include "qdm/experiment.hpp"
#include "qdm/losses.hpp"
#include "qdm/metrics.hpp"
#include "qdm/network.hpp"
#include "qdm/pairing.hpp"
#include "qdm/trainer.hpp"

namespace py = pybind11;
using namespace qdm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

nlohmann::json from_py(const py::handle& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  return nlohmann::json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

TrainConfig train_config_from(const py::handle& cfg) {
  nlohmann::json j = te_train_config().to_json();
  const nlohmann::json patch = from_py(cfg);
  for (auto it = patch.begin(); it != patch.end(); ++it)
    if (!j.contains(it.key())) throw ConfigError("unknown train option '" + it.key() + "'");
  j.merge_patch(patch);
  TrainConfig t = TrainConfig::from_json(j);
  t.validate();
  return t;
}

Array window_array(const WindowedDataset& ds, std::size_t i) {
  const std::size_t W = ds.window_length(), m = ds.feature_count();
  Array out({W, m});
  auto v = out.mutable_unchecked<2>();
  for (std::size_t t = 0; t < W; ++t)
    for (std::size_t f = 0; f < m; ++f) v(t, f) = ds.value(i, t, f);
  return out;
}

Array dataset_array(const WindowedDataset& ds) {
  const std::size_t N = ds.size(), W = ds.window_length(), m = ds.feature_count();
  Array out({N, W, m});
  auto v = out.mutable_unchecked<3>();
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t t = 0; t < W; ++t)
      for (std::size_t f = 0; f < m; ++f) v(i, t, f) = ds.value(i, t, f);
  return out;
}

WindowedDataset dataset_from_array(const Array& x, const std::vector<int>& labels, int class_count) {
  if (x.ndim() != 3) throw DimensionError("expected an array of shape [N, W, m]");
  const std::size_t N = static_cast<std::size_t>(x.shape(0)), W = static_cast<std::size_t>(x.shape(1)),
                    m = static_cast<std::size_t>(x.shape(2));
  if (labels.size() != N) throw ContractError("one label per window required");
  if (N == 0 || W == 0 || m == 0) throw ContractError("empty dataset array");
  auto block = std::make_shared<const SeriesMatrix>(N * W, m, std::vector<double>(x.data(), x.data() + N * W * m));
  std::vector<WindowRef> refs(N);
  for (std::size_t i = 0; i < N; ++i) refs[i] = {0, i * W};
  if (class_count < 0) class_count = 1 + *std::max_element(labels.begin(), labels.end());
  return WindowedDataset({block}, refs, labels, W, class_count);
}

SyntheticConfig synthetic_config(const py::kwargs& kw) {
  SyntheticConfig s;
  nlohmann::json j = from_py(kw);
  if (j.contains("class_count")) {
    s.class_count = j.at("class_count").get<int>();
    s.samples_per_class.assign(static_cast<std::size_t>(s.class_count), 500);
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const auto& v = it.value();
    if (k == "class_count") continue;
    else if (k == "samples_per_class") {
      if (v.is_number()) s.samples_per_class.assign(static_cast<std::size_t>(s.class_count), v.get<std::size_t>());
      else s.samples_per_class = v.get<std::vector<std::size_t>>();
    } else if (k == "length") s.length = v.get<std::size_t>();
    else if (k == "channels") s.channels = v.get<std::size_t>();
    else if (k == "noise") s.noise = v.get<double>();
    else if (k == "channel_shift") s.channel_shift = v.get<double>();
    else if (k == "phase_jitter") s.phase_jitter = v.get<double>();
    else if (k == "amplitude_jitter") s.amplitude_jitter = v.get<double>();
    else if (k == "slope_jitter") s.slope_jitter = v.get<double>();
    else if (k == "seed") s.seed = v.get<std::uint64_t>();
    else throw ConfigError("unknown synthetic option '" + k + "'");
  }
  s.validate();
  return s;
}

ExperimentConfig experiment_from(const std::string& source, const std::vector<std::string>& overrides) {
  const bool is_file = source.find('\n') == std::string::npos && source.find(':') == std::string::npos;
  ExperimentConfig c = is_file ? load_experiment_config(source) : parse_experiment_config(source);
  for (const auto& o : overrides) apply_override(c, o);
  return c;
}

py::dict history_row(const StepRecord& r) { return to_py(r.to_json()).cast<py::dict>(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "LSTM with quadruplet deep metric learning for imbalanced fault diagnosis";

  auto base = py::register_exception<Error>(m, "QdmError");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<SamplingError>(m, "SamplingError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<WindowedDataset>(m, "Dataset")
      .def_static("from_array", &dataset_from_array, py::arg("x"), py::arg("labels"), py::arg("class_count") = -1,
                  "Dataset from an array of windows with shape [N, W, m].")
      .def_static("load", &load_dataset, py::arg("path"))
      .def("save", [](const WindowedDataset& ds, const std::string& path) { save_dataset(path, ds); })
      .def("__len__", &WindowedDataset::size)
      .def_property_readonly("window_length", &WindowedDataset::window_length)
      .def_property_readonly("feature_count", &WindowedDataset::feature_count)
      .def_property_readonly("class_count", &WindowedDataset::class_count)
      .def_property_readonly("labels", &WindowedDataset::labels)
      .def_property_readonly("class_names", [](const WindowedDataset& ds) { return ds.label_map().names; })
      .def_property_readonly("class_sizes",
                             [](const WindowedDataset& ds) {
                               std::vector<std::size_t> out;
                               for (const auto& c : ds.class_index()) out.push_back(c.size());
                               return out;
                             })
      .def_property("imbalance_set", &WindowedDataset::imbalance_set, &WindowedDataset::set_imbalance_set)
      .def_property_readonly("fingerprint", &WindowedDataset::fingerprint)
      .def("window", &window_array, py::arg("index"))
      .def("to_array", &dataset_array)
      .def("subset", [](const WindowedDataset& ds, const std::vector<std::size_t>& idx) { return ds.subset(idx); })
      .def("normalized",
           [](const WindowedDataset& ds, const WindowedDataset* fit_on) {
             return apply_normalization(ds, fit_normalization(fit_on ? *fit_on : ds));
           },
           py::arg("fit_on") = nullptr, "Z-scored copy; statistics come from fit_on (default: this dataset).")
      .def("same_content", &WindowedDataset::same_content);

  m.def("synthetic_dataset", [](const py::kwargs& kw) { return synthetic_dataset(synthetic_config(kw)); },
        "Generated multi-regime sequences, one window per sequence.");
  m.def(
      "make_windows",
      [](const Array& raw, const std::vector<int>& labels, std::size_t window, std::size_t step, int class_count) {
        if (raw.ndim() != 2) throw DimensionError("expected an array of shape [n, m]");
        const std::size_t n = static_cast<std::size_t>(raw.shape(0)), c = static_cast<std::size_t>(raw.shape(1));
        SeriesMatrix mat(n, c, std::vector<double>(raw.data(), raw.data() + n * c));
        return make_windows(mat, labels, window, step, class_count);
      },
      py::arg("raw"), py::arg("labels"), py::arg("window"), py::arg("step") = 1, py::arg("class_count") = -1);
  m.def(
      "load_te_csv",
      [](const std::vector<std::string>& files, const std::vector<int>& faults, bool keep_normal, std::size_t window,
         std::size_t step) {
        TeOptions opts;
        opts.keep_normal = keep_normal;
        std::vector<RawRun> runs;
        for (const auto& f : files)
          for (auto& r : load_te_csv(f, faults, opts)) runs.push_back(std::move(r));
        const LabelMap labels = te_label_map(faults, keep_normal);
        return windows_from_runs(runs, window, step, static_cast<int>(labels.size()), &labels);
      },
      py::arg("files"), py::arg("faults") = kTeFaults, py::arg("keep_normal") = false, py::arg("window") = 100,
      py::arg("step") = 1);
  m.def(
      "load_signal",
      [](const std::string& path, int label, std::size_t window, std::size_t step) {
        return load_signal(path, label, window, step);
      },
      py::arg("path"), py::arg("label"), py::arg("window") = 400, py::arg("step") = 32);
  m.def("cwru_label", &cwru_label, py::arg("location"), py::arg("diameter") = 0.0);

  m.def(
      "apply_imbalance",
      [](const WindowedDataset& ds, const std::map<int, py::object>& targets, std::uint64_t seed) {
        std::map<int, ImbalanceTarget> t;
        for (const auto& [c, v] : targets) {
          if (py::isinstance<py::int_>(v)) t[c] = v.cast<std::size_t>();
          else t[c] = KeepFraction{v.cast<double>()};
        }
        Rng rng = Rng::derive(seed, {tag(Stream::kImbalance)});
        return apply_imbalance(ds, t, rng);
      },
      py::arg("dataset"), py::arg("targets"), py::arg("seed") = 0,
      "Subsample classes to an int count or float kept fraction; they become the imbalance set.");
  m.def(
      "sample_quadruplets",
      [](const WindowedDataset& ds, std::size_t batch_size, std::uint64_t seed) {
        Rng rng(seed);
        const QuadrupletBatch b = sample_quadruplets(ds, batch_size, rng);
        py::list tuples;
        for (const auto& q : b.tuples) tuples.append(py::make_tuple(q.anchor, q.positive, q.negative, q.minor));
        py::dict out;
        out["tuples"] = tuples;
        out["gamma"] = std::vector<int>(b.gamma.begin(), b.gamma.end());
        return out;
      },
      py::arg("dataset"), py::arg("batch_size"), py::arg("seed") = 0,
      "Quadruplets as (anchor, positive, negative, minor) index tuples plus gamma flags.");

  m.def(
      "quadruplet_loss",
      [](double d_pos, double d_neg, double d_minor, bool gamma, double M, double M2, double lambda_pos,
         double lambda_minor) {
        QuadrupletLossConfig c{M, M2, lambda_pos, lambda_minor, 0.0};
        return quadruplet_loss_value(d_pos, d_neg, d_minor, gamma, c);
      },
      py::arg("d_pos"), py::arg("d_neg"), py::arg("d_minor"), py::arg("gamma"), py::arg("M") = 20.0,
      py::arg("M2") = 50.0, py::arg("lambda_pos") = 50.0, py::arg("lambda_minor") = 20.0,
      "Per-tuple quadruplet loss (L_pos + L_neg + L_minor) / 3 from distances.");

  m.def("te_train_config", []() { return to_py(te_train_config().to_json()); });
  m.def("cwru_train_config", []() { return to_py(cwru_train_config().to_json()); });

  py::class_<ModelParams>(m, "Model")
      .def_static(
          "load",
          [](const std::string& path) { return load_model(path); }, py::arg("path"))
      .def("save", [](const ModelParams& model, const std::string& path) { save_model(path, model); })
      .def_property_readonly("shape",
                             [](const ModelParams& model) {
                               const ModelShape s = model.shape();
                               py::dict d;
                               d["input_size"] = s.input_size;
                               d["hidden_size"] = s.hidden_size;
                               d["layer_count"] = s.layer_count;
                               d["embed_dim"] = s.embed_dim;
                               d["class_count"] = s.class_count;
                               return d;
                             })
      .def("parameters",
           [](const ModelParams& model) {
             py::dict d;
             const auto names = model.parameter_names();
             const auto params = model.parameters();
             for (std::size_t k = 0; k < params.size(); ++k) {
               const Tensor& t = *params[k];
               Array a({t.rows(), t.cols()});
               std::copy(t.buffer().begin(), t.buffer().end(), a.mutable_data());
               d[py::str(names[k])] = a;
             }
             return d;
           })
      .def("logits",
           [](const ModelParams& model, const WindowedDataset& ds) {
             const Tensor l = predict_logits(model, ds);
             Array a({l.rows(), l.cols()});
             std::copy(l.buffer().begin(), l.buffer().end(), a.mutable_data());
             return a;
           })
      .def("predict", [](const ModelParams& model, const WindowedDataset& ds) { return predict(model, ds); })
      .def("bitwise_equal", &ModelParams::bitwise_equal);

  m.def(
      "train",
      [](const WindowedDataset& ds, const py::object& config, const WindowedDataset* validation) {
        const TrainConfig cfg = train_config_from(config);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(ds, cfg, validation);
        }
        py::list history;
        for (const auto& h : r.history) history.append(history_row(h));
        py::dict out;
        out["model"] = py::cast(std::move(r.model));
        out["history"] = history;
        out["epochs_run"] = r.epochs_run;
        out["stopped_early"] = r.stopped_early;
        out["config_hash"] = cfg.hash();
        return out;
      },
      py::arg("dataset"), py::arg("config") = py::none(), py::arg("validation") = nullptr,
      "Trains a model. config is a dict of train keys merged over the TE defaults.");
  m.def(
      "evaluate",
      [](const ModelParams& model, const WindowedDataset& ds, int normal_class) {
        return to_py(to_json(evaluate(model, ds, normal_class)));
      },
      py::arg("model"), py::arg("dataset"), py::arg("normal_class") = -1);
  m.def(
      "metrics",
      [](const std::vector<int>& truth, const std::vector<int>& predicted, int class_count, int normal_class) {
        return to_py(to_json(report_from_predictions(truth, predicted, class_count, normal_class)));
      },
      py::arg("truth"), py::arg("predicted"), py::arg("class_count"), py::arg("normal_class") = -1,
      "Per-class recall/F1 and macro averages from label lists.");

  m.def(
      "run_scenario",
      [](const std::string& config, const std::vector<std::string>& overrides) {
        const ExperimentConfig c = experiment_from(config, overrides);
        ScenarioResult r;
        {
          py::gil_scoped_release release;
          r = run_scenario(c);
        }
        return to_py(r.to_json());
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      "Runs a scenario from a YAML file path or YAML text; returns the result document.");
  m.def(
      "run_ablation",
      [](const std::string& config, const std::vector<std::string>& overrides) {
        const ExperimentConfig c = experiment_from(config, overrides);
        ScenarioResult r;
        {
          py::gil_scoped_release release;
          r = run_ablation(c);
        }
        return to_py(r.to_json());
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "scenario_table", [](const py::object& result) { return ScenarioResult::from_json(from_py(result)).table(); },
      py::arg("result"), "Text table for a result document.");
  m.def(
      "experiment_config",
      [](const std::string& config, const std::vector<std::string>& overrides) {
        return to_py(experiment_from(config, overrides).to_json());
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, "Parsed and validated config as a dict.");
}
