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

#include <optional>
#include <span>

#include "smokeda/autodiff.hpp"

namespace smokeda {

/// Weights of the joint objective. phi is the gradient-reversal factor
/// applied on the path from the domain loss into shared features; the
/// reported scalar loss never includes it.
struct LossWeights {
  double alpha_label = 0.8;
  double beta_domain = 0.2;
  double gamma_coral = 0.2;
  double phi = -1.0;
  int p = 1;  // hinge power, 1 or 2
  /// When set, alpha_label + beta_domain must equal 1 exactly.
  bool unit_sum = false;

  void validate() const;
};

/// Probability floor inside the log of the classification loss.
inline constexpr double kProbFloor = 1e-12;

/// -(1/N) sum_i log probs[i][labels[i]]. Probabilities below kProbFloor are
/// clamped (and logged); the clamped entries pass no gradient.
Var softmax_cross_entropy(Var probs, std::span<const int> labels);

/// Hinge domain loss evaluated at the predicted label l_i = argmax_k probs:
/// (1/N) sum_i max(0, 1 - s_i * probs[i][l_i])^p with s_i = +1 when l_i
/// matches the domain label and -1 otherwise.
Var hinge_domain_loss(Var probs_d, std::span<const int> labels_d, int p);

/// Unbiased covariance of the rows of F[n x d]. Throws
/// InsufficientSamplesError for n < 2.
Var covariance(Var features);

/// ||C_S - C_T||_F^2 / (4 d^2).
Var coral_loss(Var source, Var target);

/// alpha * L_s + beta * L_d + gamma * L_coral. Absent components count as
/// zero and are left out of the graph.
Var joint_loss(Var l_s, std::optional<Var> l_d, std::optional<Var> l_coral,
               const LossWeights& w);
double joint_loss(double l_s, double l_d, double l_coral, const LossWeights& w);

}  // namespace smokeda
