/*
 * Copyright 2026 The smokeda Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "smokeda/nets.hpp"
#include "smokeda/synth.hpp"

namespace smokeda {

/// Confusion counts with smoke as the positive class.
struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  bool operator==(const ConfusionCounts&) const = default;
};

struct MetricsReport {
  double cd = 0.0;  // correct detection: (tp + tn) / total
  double ed = 0.0;  // error detection: fp / (tp + fp), 0 without positives
  double md = 0.0;  // missed detection: fn / n_smoke
  ConfusionCounts counts;
  std::size_t n_smoke = 0, n_nonsmoke = 0;

  bool operator==(const MetricsReport&) const = default;
};

/// Row-wise argmax of [N x 2] probabilities; an exact tie predicts
/// non-smoke.
std::vector<int> predict_labels(const Tensor& probs_s);

/// Tallies predictions against ground truth. Throws DimensionError on a
/// length mismatch.
ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth);

/// Throws ContractError when the counts do not add up to the class sizes.
MetricsReport metrics_cd_ed_md(const ConfusionCounts& counts, std::size_t n_smoke,
                               std::size_t n_nonsmoke);

/// Classifier probabilities for the given rows, evaluated in chunks with
/// parameters held constant.
Tensor predict_probs(const Model& model, const Corpus& corpus, std::span<const std::size_t> rows,
                     std::size_t chunk = 250);

/// Forward pass over the rows and CD/ED/MD of the classifier head. Throws
/// ContractError for an empty row set.
MetricsReport evaluate(const Model& model, const Corpus& corpus, std::span<const std::size_t> rows);

}  // namespace smokeda
