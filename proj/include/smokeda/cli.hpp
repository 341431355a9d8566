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
#include <iosfwd>
#include <string>
#include <vector>

#include "smokeda/synth.hpp"
#include "smokeda/training.hpp"

namespace smokeda {

inline constexpr int kConfigVersion = 1;

struct SweepSettings {
  std::string which = "beta";  // ratio_st, ratio_ns or beta
  std::vector<double> ratios_st{1, 2, 3, 4, 5};
  std::vector<double> ratios_ns{0.5, 1, 1.5, 2, 2.5, 3};
  std::vector<double> betas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  bool with_coral = true;
  double coral_gamma = 0.2;
};

struct TsneSettings {
  std::string checkpoint;  // empty: <out>/checkpoint.bin
  int per_group = 200;
  double perplexity = 30.0;
  int iterations = 1000;
};

/// Everything a command needs. The resolved form written next to the outputs
/// reproduces them exactly.
struct ExperimentConfig {
  int version = kConfigVersion;
  std::string command;
  std::uint64_t seed = 1;
  std::string out = "run";
  /// Corpus written by `synth`; empty means generate it in memory.
  std::string data_dir;
  /// Seeds for ablation and sweep runs; empty means seed .. seed + n_seeds - 1.
  std::vector<std::uint64_t> seeds;
  int n_seeds = 5;
  DatasetSpec dataset;
  TrainConfig train;
  SweepSettings sweep;
  TsneSettings tsne;
};

/// JSON text of a config, keys in a fixed order.
std::string config_to_text(const ExperimentConfig& cfg);

/// Parses a config file over the defaults. Unknown keys, a missing or
/// unsupported version and ill-typed values throw ConfigError. The global
/// seed comes from the file, then SMOKEDA_SEED, then the default; it fills
/// train.seed and dataset.master_seed unless the file sets them.
ExperimentConfig parse_config(const std::string& text);

/// Entry point of the `smokeda` binary. Returns the process exit status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace smokeda
