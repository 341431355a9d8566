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

#include "smokeda/losses.hpp"

#include <spdlog/spdlog.h>

#include <Eigen/Core>
#include <cmath>
#include <memory>

#include "smokeda/errors.hpp"

namespace smokeda {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_labels(Var probs, std::span<const int> labels, const char* op) {
  if (probs.value().rank() != 2)
    throw DimensionError(std::string(op) + ": probabilities must be 2D, got " +
                         to_string(probs.shape()));
  if (labels.size() != probs.shape()[0])
    throw DimensionError(std::string(op) + ": " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(probs.shape()[0]) + " rows");
  const auto k = static_cast<int>(probs.shape()[1]);
  for (int y : labels)
    if (y < 0 || y >= k) throw ContractError(std::string(op) + ": label out of range");
}

}  // namespace

void LossWeights::validate() const {
  for (double v : {alpha_label, beta_domain, gamma_coral, phi})
    if (!std::isfinite(v)) throw ConfigError("loss weights must be finite");
  if (alpha_label < 0.0 || alpha_label > 1.0 || beta_domain < 0.0 || beta_domain > 1.0)
    throw ConfigError("alpha_label and beta_domain must lie in [0, 1]");
  if (gamma_coral < 0.0) throw ConfigError("gamma_coral must be non-negative");
  if (p != 1 && p != 2) throw ConfigError("hinge power p must be 1 or 2");
  if (phi == 0.0) throw ConfigError("phi must be nonzero");
  if (unit_sum && alpha_label + beta_domain != 1.0)
    throw ConfigError("alpha_label + beta_domain must equal 1");
}

Var softmax_cross_entropy(Var probs, std::span<const int> labels) {
  check_labels(probs, labels, "softmax_cross_entropy");
  const std::size_t n = labels.size(), k = probs.shape()[1];
  const Tensor& pv = probs.value();
  double total = 0.0;
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = pv[i * k + static_cast<std::size_t>(labels[i])];
    if (p < kProbFloor) ++clamped;
    total -= std::log(std::max(p, kProbFloor));
  }
  if (clamped)
    spdlog::warn("softmax_cross_entropy: {} of {} true-label probabilities clamped to {}",
                 clamped, n, kProbFloor);
  std::vector<int> y(labels.begin(), labels.end());
  Graph& g = probs.graph();
  return g.record("softmax_cross_entropy", {probs},
                  Tensor::scalar(total / static_cast<double>(n)),
                  [&g, ip = probs.id(), y = std::move(y), k](const Tensor& go,
                                                             std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    const Tensor& pv = g.value(ip);
                    const double scale_ = go[0] / static_cast<double>(y.size());
                    for (std::size_t i = 0; i < y.size(); ++i) {
                      const std::size_t at = i * k + static_cast<std::size_t>(y[i]);
                      if (pv[at] >= kProbFloor) (*gi[0])[at] -= scale_ / pv[at];
                    }
                  });
}

Var hinge_domain_loss(Var probs_d, std::span<const int> labels_d, int p) {
  check_labels(probs_d, labels_d, "hinge_domain_loss");
  if (p != 1 && p != 2) throw ContractError("hinge_domain_loss: p must be 1 or 2");
  const std::size_t n = labels_d.size(), k = probs_d.shape()[1];
  const Tensor& pv = probs_d.value();

  // Per row: flat index of the predicted-label probability, its sign, and
  // the margin 1 - sign * t.
  struct Term {
    std::size_t at;
    double sign;
    double margin;
  };
  std::vector<Term> terms(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t l = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (pv[i * k + j] > pv[i * k + l]) l = j;
    const double sign = static_cast<int>(l) == labels_d[i] ? 1.0 : -1.0;
    const double margin = 1.0 - sign * pv[i * k + l];
    terms[i] = {i * k + l, sign, margin};
    if (margin > 0.0) total += p == 1 ? margin : margin * margin;
  }
  return probs_d.graph().record(
      "hinge_domain_loss", {probs_d}, Tensor::scalar(total / static_cast<double>(n)),
      [terms = std::move(terms), p](const Tensor& go, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        const double scale_ = go[0] / static_cast<double>(terms.size());
        for (const auto& t : terms) {
          if (t.margin <= 0.0) continue;
          const double dterm = p == 1 ? 1.0 : 2.0 * t.margin;
          (*gi[0])[t.at] -= scale_ * dterm * t.sign;
        }
      });
}

Var covariance(Var features) {
  if (features.value().rank() != 2)
    throw DimensionError("covariance: expected [n x d], got " + to_string(features.shape()));
  const std::size_t n = features.shape()[0], d = features.shape()[1];
  if (n < 2)
    throw InsufficientSamplesError("covariance: need at least 2 rows, got " + std::to_string(n));
  const auto rows = static_cast<Eigen::Index>(n), cols = static_cast<Eigen::Index>(d);
  Eigen::Map<const RowMat> f(features.value().data().data(), rows, cols);
  auto centered = std::make_shared<RowMat>(f);
  for (Eigen::Index c = 0; c < cols; ++c) {
    double mean = 0.0;
    for (Eigen::Index r = 0; r < rows; ++r) mean += f(r, c);
    mean /= static_cast<double>(n);
    for (Eigen::Index r = 0; r < rows; ++r) (*centered)(r, c) -= mean;
  }
  const double inv = 1.0 / static_cast<double>(n - 1);
  Tensor out({d, d});
  Eigen::Map<RowMat>(out.data().data(), cols, cols).noalias() =
      inv * centered->transpose() * *centered;
  return features.graph().record(
      "covariance", {features}, std::move(out),
      [centered, inv, rows, cols](const Tensor& go, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        // Columns of the centered matrix sum to zero, so the mean-removal
        // Jacobian drops out.
        Eigen::Map<const RowMat> g(go.data().data(), cols, cols);
        Eigen::Map<RowMat>(gi[0]->data().data(), rows, cols).noalias() +=
            inv * *centered * (g + g.transpose());
      });
}

Var coral_loss(Var source, Var target) {
  if (source.value().rank() != 2 || target.value().rank() != 2 ||
      source.shape()[1] != target.shape()[1])
    throw DimensionError("coral_loss: feature widths differ: " + to_string(source.shape()) +
                         " vs " + to_string(target.shape()));
  const auto d = static_cast<double>(source.shape()[1]);
  return scale(sum_squares(sub(covariance(source), covariance(target))), 1.0 / (4.0 * d * d));
}

Var joint_loss(Var l_s, std::optional<Var> l_d, std::optional<Var> l_coral,
               const LossWeights& w) {
  Var total = scale(l_s, w.alpha_label);
  if (l_d) total = add(total, scale(*l_d, w.beta_domain));
  if (l_coral) total = add(total, scale(*l_coral, w.gamma_coral));
  return total;
}

double joint_loss(double l_s, double l_d, double l_coral, const LossWeights& w) {
  return w.alpha_label * l_s + w.beta_domain * l_d + w.gamma_coral * l_coral;
}

}  // namespace smokeda
