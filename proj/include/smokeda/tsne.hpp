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

#include <cstdint>
#include <span>
#include <vector>

#include "smokeda/tensor.hpp"

namespace smokeda {

struct TsneResult {
  Tensor embedding;  // [n x 2]
  double initial_kl = 0.0;
  double final_kl = 0.0;
};

/// Conditional affinities p_{j|i} as [n x n], each row calibrated by
/// bisection on the Gaussian precision to the requested perplexity.
Tensor tsne_conditional_affinities(const Tensor& features, double perplexity);

/// Exact t-SNE. Requires 5 <= perplexity <= (n - 1) / 3 and n <= 5000
/// (ContractError otherwise). Exact duplicate rows receive a one-off
/// deterministic jitter of 1e-6. Early exaggeration (x4) covers the first
/// quarter of the iterations.
TsneResult tsne_embed(const Tensor& features, double perplexity, int iterations, std::uint64_t seed);

/// Mean fraction of each point's k nearest neighbours sharing its label.
double knn_purity(const Tensor& embedding, std::span<const int> labels, int k);

struct CentroidGaps {
  double synthetic_real = 0.0;  // synthetic smoke vs real smoke
  double smoke_nonsmoke = 0.0;  // all smoke vs all non-smoke
};

/// Euclidean distances between group centroids of an [n x d] point set.
/// Throws ContractError when a group is empty.
CentroidGaps centroid_gaps(const Tensor& points, std::span<const int> y_s, std::span<const int> y_d);

}  // namespace smokeda
