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
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "smokeda/autodiff.hpp"

namespace smokeda {

/// Architecture variants. kBaseline is the classifier-only network used as
/// the no-adaptation reference; the other four carry a GRL domain head.
enum class Variant {
  kBaseline,
  kGrlOnly,
  kGrlAdaptD,
  kGrlAdaptSD,
  kGrlAdaptCoral,
};

std::string_view variant_name(Variant v);
/// Accepts the names produced by variant_name. Throws ConfigError.
Variant parse_variant(std::string_view name);

struct ModelVariantConfig {
  Variant variant = Variant::kGrlAdaptCoral;
  int image_size = 32;
  int channels = 3;
  int feature_dim = 64;
  int adapt_dim = 32;
  GrlConfig grl;

  void validate() const;
  bool has_adaptation() const;
  bool has_domain_head() const { return variant != Variant::kBaseline; }
};

/// Named parameter tensors, ordered by name.
struct ModelParams {
  std::map<std::string, Tensor> tensors;
  std::uint64_t init_seed = 0;

  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
};

/// Parameters bound into one graph, by name.
using BoundParams = std::map<std::string, Var>;

/// Two conv(3x3, pad 1)+relu+maxpool2 stages (8 then 16 channels), flatten,
/// affine+relu to feature_dim.
struct FeatureExtractor {
  static constexpr int kStage1Channels = 8;
  static constexpr int kStage2Channels = 16;

  static void init(ModelParams& params, const ModelVariantConfig& cfg, std::uint64_t seed);
  /// x is [N x C x H x W]; returns f_represent [N x feature_dim].
  static Var apply(const BoundParams& p, Var x);
};

/// f_adapt = A f_represent + b, projecting to a lower dimension.
struct AdaptationLayer {
  static void init(ModelParams& params, int d_in, int d_out, std::uint64_t seed);
  static Var apply(const BoundParams& p, Var f_represent);
};

/// Everything one forward pass produces. probs_d is absent for the baseline;
/// features_for_coral only for kGrlAdaptCoral.
struct ForwardResult {
  Var f_represent;
  std::optional<Var> f_adapt;
  Var probs_s;
  std::optional<Var> probs_d;
  std::optional<Var> features_for_coral;
  /// Input to the GRL (the domain head's feature source).
  std::optional<Var> domain_features;
  BoundParams params;
};

/// An assembled variant: its config, its parameters and the wiring between
/// backbone, adaptation layer and heads.
class Model {
 public:
  /// Fresh initialization; identical seeds give bit-identical parameters and
  /// every layer draws from its own stream, so shared layers initialize the
  /// same way across variants.
  Model(ModelVariantConfig cfg, std::uint64_t seed);
  Model(ModelVariantConfig cfg, ModelParams params);

  const ModelVariantConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  /// Changes the GRL multiplier used by later forward passes.
  void set_grl(const GrlConfig& grl);

  /// images is [N x C x H x W]. With trainable=false parameters enter the
  /// graph as constants and no backward state is kept.
  ForwardResult forward(Graph& g, const Tensor& images, bool trainable = true) const;

  /// Names of the parameters this variant owns.
  std::vector<std::string> parameter_names() const;

 private:
  ModelVariantConfig cfg_;
  ModelParams params_;
};

}  // namespace smokeda
