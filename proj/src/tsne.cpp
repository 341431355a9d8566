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

#include "smokeda/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <spdlog/spdlog.h>

#include "smokeda/errors.hpp"
#include "smokeda/rng.hpp"

namespace smokeda {

namespace {

constexpr double kJitter = 1e-6;
constexpr double kExaggeration = 4.0;
constexpr double kLearningRate = 200.0;
constexpr double kMinGain = 0.01;

std::vector<double> squared_distances(const Tensor& x) {
  const std::size_t n = x.dim(0), d = x.dim(1);
  std::vector<double> out(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = x[i * d + k] - x[j * d + k];
        s += diff * diff;
      }
      out[i * n + j] = out[j * n + i] = s;
    }
  return out;
}

void check_features(const Tensor& features, double perplexity) {
  if (features.rank() != 2)
    throw DimensionError("t-SNE expects [n x d] features, got " + to_string(features.shape()));
  const std::size_t n = features.dim(0);
  if (n > 5000) throw ContractError("exact t-SNE is limited to 5000 points");
  if (!(perplexity >= 5.0) || perplexity > static_cast<double>(n - 1) / 3.0)
    throw ContractError("perplexity must lie in [5, (n - 1) / 3] for n = " + std::to_string(n));
}

// Entropy-matched row of p_{j|i}.
void calibrate_row(const double* dist, std::size_t n, std::size_t i, double perplexity, double* row) {
  const double target = std::log(perplexity);
  double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, dist[j]);
  for (int iter = 0; iter < 200; ++iter) {
    double sum = 0.0, weighted = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row[j] = j == i ? 0.0 : std::exp(-beta * (dist[j] - dmin));
      sum += row[j];
      weighted += row[j] * (dist[j] - dmin);
    }
    const double entropy = std::log(sum) + beta * weighted / sum;
    for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    const double diff = entropy - target;
    if (std::abs(diff) < 1e-10) break;
    if (diff > 0) {
      lo = beta;
      beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
    } else {
      hi = beta;
      beta = 0.5 * (beta + lo);
    }
  }
}

Tensor jitter_duplicates(const Tensor& features, std::uint64_t seed) {
  const std::size_t n = features.dim(0), d = features.dim(1);
  std::map<std::vector<double>, std::size_t> seen;
  Tensor out = features;
  Rng rng(derive_seed(seed, {hash_tag("tsne-jitter")}));
  std::size_t moved = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(features.data().begin() + static_cast<std::ptrdiff_t>(i * d),
                            features.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * d));
    if (!seen.emplace(std::move(row), i).second) {
      for (std::size_t k = 0; k < d; ++k) out[i * d + k] += kJitter * (2.0 * rng.uniform() - 1.0);
      ++moved;
    }
  }
  if (moved) spdlog::info("t-SNE: jittered {} duplicate rows by up to {}", moved, kJitter);
  return out;
}

double kl_divergence(const std::vector<double>& p, const Tensor& y) {
  const std::size_t n = y.dim(0);
  std::vector<double> num(n * n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
      num[i * n + j] = num[j * n + i] = 1.0 / (1.0 + dx * dx + dy * dy);
      z += 2.0 * num[i * n + j];
    }
  double kl = 0.0;
  for (std::size_t k = 0; k < n * n; ++k) {
    if (p[k] <= 0.0 || k / n == k % n) continue;
    const double q = std::max(num[k] / z, 1e-300);
    kl += p[k] * std::log(p[k] / q);
  }
  return std::max(kl, 0.0);
}

}  // namespace

Tensor tsne_conditional_affinities(const Tensor& features, double perplexity) {
  check_features(features, perplexity);
  const std::size_t n = features.dim(0);
  const auto dist = squared_distances(features);
  Tensor p({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) calibrate_row(&dist[i * n], n, i, perplexity, &p[i * n]);
  return p;
}

TsneResult tsne_embed(const Tensor& features, double perplexity, int iterations, std::uint64_t seed) {
  check_features(features, perplexity);
  if (iterations < 1) throw ContractError("t-SNE needs at least one iteration");
  const std::size_t n = features.dim(0);
  const Tensor cond = tsne_conditional_affinities(jitter_duplicates(features, seed), perplexity);

  std::vector<double> p(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n)), 1e-12);
  for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0.0;

  Rng rng(derive_seed(seed, {hash_tag("tsne-init")}));
  Tensor y({n, 2});
  for (auto& v : y.data()) v = rng.normal(0.0, 1e-4);

  TsneResult result;
  result.initial_kl = kl_divergence(p, y);
  const int exaggerate_until = iterations / 4;
  std::vector<double> grad(2 * n), update(2 * n, 0.0), gains(2 * n, 1.0), num(n * n);
  for (int it = 0; it < iterations; ++it) {
    const double ex = it < exaggerate_until ? kExaggeration : 1.0;
    const double momentum = it < exaggerate_until ? 0.5 : 0.8;
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double dx = y[2 * i] - y[2 * j], dy = y[2 * i + 1] - y[2 * j + 1];
        num[i * n + j] = num[j * n + i] = 1.0 / (1.0 + dx * dx + dy * dy);
        z += 2.0 * num[i * n + j];
      }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (ex * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
        grad[2 * i] += 4.0 * w * (y[2 * i] - y[2 * j]);
        grad[2 * i + 1] += 4.0 * w * (y[2 * i + 1] - y[2 * j + 1]);
      }
    for (std::size_t k = 0; k < 2 * n; ++k) {
      gains[k] = (grad[k] > 0.0) != (update[k] > 0.0) ? gains[k] + 0.2 : gains[k] * 0.8;
      gains[k] = std::max(gains[k], kMinGain);
      update[k] = momentum * update[k] - kLearningRate * gains[k] * grad[k];
      y[k] += update[k];
    }
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += y[2 * i];
      my += y[2 * i + 1];
    }
    for (std::size_t i = 0; i < n; ++i) {
      y[2 * i] -= mx / static_cast<double>(n);
      y[2 * i + 1] -= my / static_cast<double>(n);
    }
  }
  result.final_kl = kl_divergence(p, y);
  result.embedding = std::move(y);
  return result;
}

double knn_purity(const Tensor& embedding, std::span<const int> labels, int k) {
  if (embedding.rank() != 2) throw DimensionError("knn_purity: expected [n x d] points");
  const std::size_t n = embedding.dim(0);
  if (labels.size() != n) throw DimensionError("knn_purity: label count does not match points");
  if (k < 1 || static_cast<std::size_t>(k) >= n) throw ContractError("knn_purity: k out of range");
  const auto dist = squared_distances(embedding);
  double total = 0.0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    std::swap(order[i], order[n - 1]);
    std::partial_sort(order.begin(), order.begin() + k, order.end() - 1, [&](std::size_t a, std::size_t b) {
      return dist[i * n + a] < dist[i * n + b] || (dist[i * n + a] == dist[i * n + b] && a < b);
    });
    int same = 0;
    for (int m = 0; m < k; ++m) same += labels[order[static_cast<std::size_t>(m)]] == labels[i];
    total += static_cast<double>(same) / k;
  }
  return total / static_cast<double>(n);
}

CentroidGaps centroid_gaps(const Tensor& points, std::span<const int> y_s, std::span<const int> y_d) {
  if (points.rank() != 2) throw DimensionError("centroid_gaps expects [n x d] points");
  const std::size_t n = points.shape()[0], d = points.shape()[1];
  if (y_s.size() != n || y_d.size() != n) throw DimensionError("one label per point required");
  std::vector<double> syn(d, 0.0), real(d, 0.0), smoke(d, 0.0), non(d, 0.0);
  std::size_t n_syn = 0, n_real = 0, n_non = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = points.data().data() + i * d;
    std::vector<double>* group = &non;
    if (y_s[i] == 1) {
      group = y_d[i] == 0 ? &syn : &real;
      (y_d[i] == 0 ? n_syn : n_real)++;
      for (std::size_t k = 0; k < d; ++k) smoke[k] += row[k];
    } else {
      ++n_non;
    }
    for (std::size_t k = 0; k < d; ++k) (*group)[k] += row[k];
  }
  if (n_syn == 0 || n_real == 0 || n_non == 0) throw ContractError("centroid_gaps needs all three groups");
  auto dist = [&](const std::vector<double>& a, std::size_t na, const std::vector<double>& b, std::size_t nb) {
    double s = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = a[k] / static_cast<double>(na) - b[k] / static_cast<double>(nb);
      s += diff * diff;
    }
    return std::sqrt(s);
  };
  return {dist(syn, n_syn, real, n_real), dist(smoke, n_syn + n_real, non, n_non)};
}

}  // namespace smokeda
