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
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smokeda/losses.hpp"
#include "smokeda/metrics.hpp"
#include "smokeda/nets.hpp"
#include "smokeda/rng.hpp"
#include "smokeda/synth.hpp"

namespace smokeda {

/// Which rows feed the two CORAL covariances.
enum class CoralPairing {
  kSmokeOnly,  // source smoke vs target smoke
  kAll,        // whole source half vs whole target half
};

std::string_view coral_pairing_name(CoralPairing p);
CoralPairing parse_coral_pairing(std::string_view name);

struct TrainConfig {
  int batch_size = 64;
  int epochs = 20;
  double lr = 0.01;
  double momentum = 0.9;
  double lr_decay = 0.85;  // per epoch
  LossWeights weights;
  std::uint64_t seed = 1;
  ModelVariantConfig variant;
  CoralPairing coral_pairing = CoralPairing::kSmokeOnly;
  /// Linear ramp of phi over this many epochs; 0 keeps phi constant.
  int phi_ramp_epochs = 0;
  /// Evaluate on the test rows after every epoch.
  bool eval_each_epoch = false;

  /// Throws ConfigError.
  void validate() const;
  /// Whether batches must carry two smoke rows per half.
  bool needs_coral_smoke() const;
};

/// One mini-batch: source rows first, then target rows.
struct Batch {
  Tensor images;
  std::vector<int> y_s, y_d;
  std::vector<std::size_t> rows;  // corpus row per batch position
  std::size_t half = 0;

  std::vector<std::size_t> coral_rows(bool source, CoralPairing pairing) const;
};

/// Cycles through shuffled source and target pools without replacement.
/// One epoch is floor(max(|S|, |T|) / half) steps, so every row of the
/// larger pool is seen once; each pool reshuffles independently once it runs
/// out.
class BatchSampler {
 public:
  BatchSampler(const Corpus& corpus, std::vector<std::size_t> source, std::vector<std::size_t> target,
               int batch_size, bool coral_smoke, std::uint64_t seed);

  std::size_t steps_per_epoch() const;
  /// Throws BatchCompositionError when the smoke constraint cannot be met
  /// within kMaxResample reshuffles.
  Batch next();

  static constexpr int kMaxResample = 10;

 private:
  struct Pool {
    std::vector<std::size_t> order;
    std::size_t cursor = 0;
  };
  std::vector<std::size_t> take(Pool& pool, bool source);
  std::size_t count_smoke(std::span<const std::size_t> rows) const;

  const Corpus* corpus_;
  Pool source_, target_;
  std::size_t half_;
  bool coral_smoke_;
  Rng rng_;
};

/// Velocity per parameter name.
using Velocity = std::map<std::string, Tensor>;

/// v <- momentum v - lr g; theta <- theta + v. Throws ContractError when a
/// parameter has no gradient and TrainingAborted on non-finite gradients.
void sgd_step(ModelParams& params, const std::map<std::string, Tensor>& grads, double lr,
              double momentum, Velocity& velocity);

struct StepLosses {
  double l_s = 0.0, l_d = 0.0, l_coral = 0.0, joint = 0.0;
  bool operator==(const StepLosses&) const = default;
};

struct EpochEval {
  int epoch = 0;
  MetricsReport report;
};

struct RunRecord {
  TrainConfig config;
  std::size_t steps_per_epoch = 0;
  std::vector<StepLosses> steps;
  std::vector<EpochEval> evals;
};

/// A built objective for one batch, kept alive for inspection.
struct StepGraph {
  Graph graph;
  ForwardResult forward;
  Var l_s;
  std::optional<Var> l_d, l_coral;
  Var joint;
};

/// Forward pass and joint loss of one batch. L_d only with a domain head,
/// L_coral only for kGrlAdaptCoral with gamma > 0.
std::unique_ptr<StepGraph> build_objective(const Model& model, const Batch& batch, const TrainConfig& cfg);

/// Gradients of the joint loss for every parameter.
std::map<std::string, Tensor> parameter_grads(StepGraph& step);

struct TrainHooks {
  /// Called with the model after every completed epoch.
  std::function<void(int epoch, const Model&)> on_epoch_end;
};

struct TrainResult {
  Model model;
  RunRecord record;
};

/// Trains cfg.variant on source and target rows of the corpus. Test rows are
/// used only when cfg.eval_each_epoch is set.
TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const TrainHooks& hooks = {});

/// Initial model of a run: the variant config with phi from the weights,
/// seeded from cfg.seed.
Model initial_model(const TrainConfig& cfg);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void checkpoint_save(const Model& model, const std::filesystem::path& path);
/// Throws CheckpointError naming what was expected.
Model checkpoint_load(const std::filesystem::path& path);

/// `step,L_s,L_d,L_coral,L_joint` with 17 significant digits.
std::string losses_csv(const RunRecord& record);
/// `epoch,CD,ED,MD`.
std::string epoch_metrics_csv(const RunRecord& record);

}  // namespace smokeda
