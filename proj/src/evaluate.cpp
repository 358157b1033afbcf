#include "qdm/evaluate.hpp"

#include "qdm/error.hpp"

namespace qdm {

EvalReport evaluate(const ModelParams& model, const WindowedDataset& ds, int normal_class) {
  if (ds.empty()) throw ContractError("evaluate: empty dataset");
  const int C = static_cast<int>(model.classifier.class_count());
  if (ds.class_count() > C)
    throw ContractError("model predicts " + std::to_string(C) + " classes, dataset has " +
                        std::to_string(ds.class_count()));
  const auto predicted = predict(model, ds);
  EvalReport r = report_from_predictions(ds.labels(), predicted, C, normal_class);
  r.meta.dataset_fingerprint = ds.fingerprint();
  r.meta.class_names = ds.label_map().names;
  r.meta.source_ids = ds.label_map().source_ids;
  r.meta.class_names.resize(static_cast<std::size_t>(C));
  r.meta.source_ids.resize(static_cast<std::size_t>(C), -1);
  for (int c = static_cast<int>(ds.label_map().size()); c < C; ++c)
    r.meta.class_names[static_cast<std::size_t>(c)] = "class " + std::to_string(c);
  return r;
}

}  // namespace qdm
