#pragma once

#include "qdm/dataset.hpp"
#include "qdm/metrics.hpp"
#include "qdm/network.hpp"

namespace qdm {

// Argmax-logit predictions over ds scored one-vs-rest per class. Metadata
// carries the dataset fingerprint and label map.
EvalReport evaluate(const ModelParams& model, const WindowedDataset& ds, int normal_class = -1);

}  // namespace qdm
