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

#include "smokeda/metrics.hpp"

#include <algorithm>

#include "smokeda/errors.hpp"

namespace smokeda {

std::vector<int> predict_labels(const Tensor& probs_s) {
  if (probs_s.rank() != 2 || probs_s.dim(1) != 2)
    throw DimensionError("predict_labels: expected [N x 2], got " + to_string(probs_s.shape()));
  std::vector<int> out(probs_s.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = probs_s.at(i, 1) > probs_s.at(i, 0) ? 1 : 0;
  return out;
}

ConfusionCounts confusion(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw DimensionError("confusion: " + std::to_string(predicted.size()) + " predictions for " +
                         std::to_string(truth.size()) + " labels");
  ConfusionCounts c;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == 1, t = truth[i] == 1;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return c;
}

MetricsReport metrics_cd_ed_md(const ConfusionCounts& counts, std::size_t n_smoke,
                               std::size_t n_nonsmoke) {
  if (counts.tp + counts.fn != n_smoke || counts.tn + counts.fp != n_nonsmoke)
    throw ContractError("confusion counts inconsistent with " + std::to_string(n_smoke) + " smoke / " +
                        std::to_string(n_nonsmoke) + " non-smoke samples");
  if (n_smoke + n_nonsmoke == 0) throw ContractError("metrics of an empty evaluation set");
  MetricsReport r;
  r.counts = counts;
  r.n_smoke = n_smoke;
  r.n_nonsmoke = n_nonsmoke;
  r.cd = static_cast<double>(counts.tp + counts.tn) / static_cast<double>(n_smoke + n_nonsmoke);
  const std::size_t positives = counts.tp + counts.fp;
  r.ed = positives ? static_cast<double>(counts.fp) / static_cast<double>(positives) : 0.0;
  r.md = n_smoke ? static_cast<double>(counts.fn) / static_cast<double>(n_smoke) : 0.0;
  return r;
}

Tensor predict_probs(const Model& model, const Corpus& corpus, std::span<const std::size_t> rows,
                     std::size_t chunk) {
  if (rows.empty()) throw ContractError("predict_probs: no rows");
  Tensor out({rows.size(), 2});
  for (std::size_t start = 0; start < rows.size(); start += chunk) {
    const auto part = rows.subspan(start, std::min(chunk, rows.size() - start));
    Graph g;
    const auto fr = model.forward(g, stack_images(corpus, part), false);
    const auto& p = fr.probs_s.value().data();
    std::copy(p.begin(), p.end(), out.data().begin() + static_cast<std::ptrdiff_t>(2 * start));
  }
  return out;
}

MetricsReport evaluate(const Model& model, const Corpus& corpus, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("evaluate: empty test set");
  const auto predicted = predict_labels(predict_probs(model, corpus, rows));
  std::vector<int> truth;
  std::size_t n_smoke = 0;
  for (auto r : rows) {
    truth.push_back(corpus.samples.at(r).y_s);
    n_smoke += truth.back() == 1;
  }
  return metrics_cd_ed_md(confusion(predicted, truth), n_smoke, rows.size() - n_smoke);
}

}  // namespace smokeda
