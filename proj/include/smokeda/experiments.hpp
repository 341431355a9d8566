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
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "smokeda/metrics.hpp"
#include "smokeda/plot.hpp"
#include "smokeda/synth.hpp"
#include "smokeda/training.hpp"

namespace smokeda {

/// Runs tasks 0..count-1 on up to `jobs` threads. Results land by index, so
/// the outcome does not depend on scheduling. The first exception is
/// rethrown after all workers stop.
void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& task);

/// Trains on the corpus and evaluates on its test split.
MetricsReport train_and_evaluate(const Corpus& corpus, const TrainConfig& cfg);

/// The five architectures in report order: the classifier-only baseline on
/// pooled data, then the four adaptation variants.
std::vector<Variant> ablation_variants();

struct AblationRow {
  Variant variant;
  std::uint64_t seed;
  MetricsReport report;
};

std::vector<AblationRow> run_ablation(const Corpus& corpus, const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds, int jobs);

/// `architecture,seed,CD,ED,MD`, per-seed rows followed by one `mean` row
/// per architecture.
std::string ablation_csv(const std::vector<AblationRow>& rows);

struct MeanMetrics {
  double cd = 0.0, ed = 0.0, md = 0.0;
};
MeanMetrics mean_metrics(const std::vector<AblationRow>& rows, Variant v);

struct SweepRow {
  double param = 0.0;
  double gamma = 0.0;  // CORAL weight of the curve the row belongs to
  std::uint64_t seed = 0;
  MetricsReport report;
};

/// n_source_smoke = round(r * augmented target smoke count) per ratio r >= 1;
/// the target smoke set is enlarged by dataset.augment_factor.
std::vector<SweepRow> sweep_source_target_ratio(const DatasetSpec& dataset, const TrainConfig& base,
                                                std::span<const double> ratios,
                                                std::span<const std::uint64_t> seeds, int jobs);

/// Non-smoke to smoke ratio per dataset.
std::vector<SweepRow> sweep_nonsmoke_ratio(const DatasetSpec& dataset, const TrainConfig& base,
                                           std::span<const double> ratios,
                                           std::span<const std::uint64_t> seeds, int jobs);

/// alpha = 1 - beta per beta in (0, 1); the gamma = 0 curve always, and the
/// gamma = coral_gamma curve when with_coral is set. Trains kGrlAdaptCoral.
std::vector<SweepRow> sweep_beta(const Corpus& corpus, const TrainConfig& base, std::span<const double> betas,
                                 bool with_coral, std::span<const std::uint64_t> seeds, int jobs,
                                 double coral_gamma = 0.2);

/// `param,seed,CD,ED,MD`; with_gamma appends a `gamma` column.
std::string sweep_csv(const std::vector<SweepRow>& rows, bool with_gamma);

/// Seed-averaged CD per (gamma, param), one series per gamma, params sorted.
std::vector<Series> sweep_cd_series(const std::vector<SweepRow>& rows);

}  // namespace smokeda
