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

#include "smokeda/nets.hpp"

#include <cmath>

#include "smokeda/errors.hpp"
#include "smokeda/rng.hpp"

namespace smokeda {

namespace {

// Symmetric uniform initialization in [-bound, bound], bound from fan-in.
Tensor uniform_init(Shape shape, double bound, std::uint64_t seed, std::string_view name) {
  Rng rng(derive_seed(seed, {hash_tag(name)}));
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

void init_linear(ModelParams& params, const std::string& prefix, int d_in, int d_out,
                 double gain, std::uint64_t seed) {
  const double bound = std::sqrt(gain / d_in);
  params.tensors[prefix + ".w"] =
      uniform_init({static_cast<std::size_t>(d_in), static_cast<std::size_t>(d_out)}, bound,
                   seed, prefix + ".w");
  params.tensors[prefix + ".b"] = Tensor({static_cast<std::size_t>(d_out)}, 0.0);
}

void init_conv(ModelParams& params, const std::string& prefix, int c_in, int c_out,
               std::uint64_t seed) {
  const double bound = std::sqrt(6.0 / (c_in * 9));
  params.tensors[prefix + ".w"] =
      uniform_init({static_cast<std::size_t>(c_out), static_cast<std::size_t>(c_in), 3, 3},
                   bound, seed, prefix + ".w");
  params.tensors[prefix + ".b"] = Tensor({static_cast<std::size_t>(c_out)}, 0.0);
}

const Var& bound(const BoundParams& p, const std::string& name) {
  auto it = p.find(name);
  if (it == p.end()) throw ContractError("parameter not bound: " + name);
  return it->second;
}

Var head(const BoundParams& p, const std::string& prefix, Var x) {
  return softmax(affine(x, bound(p, prefix + ".w"), bound(p, prefix + ".b")));
}

int head_input_dim(const ModelVariantConfig& cfg, bool domain) {
  switch (cfg.variant) {
    case Variant::kBaseline:
    case Variant::kGrlOnly:
      return cfg.feature_dim;
    case Variant::kGrlAdaptD:
      return domain ? cfg.adapt_dim : cfg.feature_dim;
    case Variant::kGrlAdaptSD:
    case Variant::kGrlAdaptCoral:
      return cfg.adapt_dim;
  }
  throw ConfigError("unknown variant");
}

}  // namespace

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::kBaseline: return "baseline";
    case Variant::kGrlOnly: return "grl_only";
    case Variant::kGrlAdaptD: return "grl_adapt_d";
    case Variant::kGrlAdaptSD: return "grl_adapt_sd";
    case Variant::kGrlAdaptCoral: return "grl_adapt_coral";
  }
  throw ConfigError("unknown variant");
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kBaseline, Variant::kGrlOnly, Variant::kGrlAdaptD,
                    Variant::kGrlAdaptSD, Variant::kGrlAdaptCoral})
    if (variant_name(v) == name) return v;
  throw ConfigError("unknown variant: " + std::string(name));
}

void ModelVariantConfig::validate() const {
  if (image_size < 8 || image_size % 4 != 0)
    throw ConfigError("image_size must be a positive multiple of 4 (>= 8)");
  if (channels < 1) throw ConfigError("channels must be positive");
  if (feature_dim < 2 || adapt_dim < 1) throw ConfigError("feature dimensions must be positive");
  if (adapt_dim >= feature_dim) throw ConfigError("adapt_dim must be smaller than feature_dim");
  grl.validate();
  (void)variant_name(variant);
}

bool ModelVariantConfig::has_adaptation() const {
  return variant == Variant::kGrlAdaptD || variant == Variant::kGrlAdaptSD ||
         variant == Variant::kGrlAdaptCoral;
}

const Tensor& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

Tensor& ModelParams::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

void FeatureExtractor::init(ModelParams& params, const ModelVariantConfig& cfg,
                            std::uint64_t seed) {
  init_conv(params, "conv1", cfg.channels, kStage1Channels, seed);
  init_conv(params, "conv2", kStage1Channels, kStage2Channels, seed);
  const int side = cfg.image_size / 4;
  init_linear(params, "fc", kStage2Channels * side * side, cfg.feature_dim, 6.0, seed);
}

Var FeatureExtractor::apply(const BoundParams& p, Var x) {
  Var h = conv2d(x, bound(p, "conv1.w"), 1, 1);
  h = maxpool2(relu(add_channel_bias(h, bound(p, "conv1.b"))));
  h = conv2d(h, bound(p, "conv2.w"), 1, 1);
  h = maxpool2(relu(add_channel_bias(h, bound(p, "conv2.b"))));
  return relu(affine(flatten(h), bound(p, "fc.w"), bound(p, "fc.b")));
}

void AdaptationLayer::init(ModelParams& params, int d_in, int d_out, std::uint64_t seed) {
  if (d_out >= d_in) throw ConfigError("adaptation layer must reduce dimension");
  init_linear(params, "adapt", d_in, d_out, 3.0, seed);
}

Var AdaptationLayer::apply(const BoundParams& p, Var f_represent) {
  return affine(f_represent, bound(p, "adapt.w"), bound(p, "adapt.b"));
}

Model::Model(ModelVariantConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  params_.init_seed = seed;
  FeatureExtractor::init(params_, cfg_, seed);
  if (cfg_.has_adaptation()) AdaptationLayer::init(params_, cfg_.feature_dim, cfg_.adapt_dim, seed);
  init_linear(params_, "cls", head_input_dim(cfg_, false), 2, 3.0, seed);
  if (cfg_.has_domain_head()) init_linear(params_, "dom", head_input_dim(cfg_, true), 2, 3.0, seed);
}

Model::Model(ModelVariantConfig cfg, ModelParams params)
    : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
  Model reference(cfg_, params_.init_seed);
  for (const auto& [name, t] : reference.params_.tensors) {
    auto it = params_.tensors.find(name);
    if (it == params_.tensors.end()) throw ConfigError("missing parameter: " + name);
    if (it->second.shape() != t.shape())
      throw DimensionError("parameter " + name + " has shape " + to_string(it->second.shape()) +
                           ", expected " + to_string(t.shape()));
  }
  if (params_.tensors.size() != reference.params_.tensors.size())
    throw ConfigError("parameter set does not match variant " +
                      std::string(variant_name(cfg_.variant)));
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (const auto& [name, t] : params_.tensors) names.push_back(name);
  return names;
}

ForwardResult Model::forward(Graph& g, const Tensor& images, bool trainable) const {
  const auto expect = Shape{0, static_cast<std::size_t>(cfg_.channels),
                            static_cast<std::size_t>(cfg_.image_size),
                            static_cast<std::size_t>(cfg_.image_size)};
  if (images.rank() != 4 || images.dim(1) != expect[1] || images.dim(2) != expect[2] ||
      images.dim(3) != expect[3])
    throw DimensionError("model input " + to_string(images.shape()) + " does not match [N x " +
                         std::to_string(cfg_.channels) + " x " + std::to_string(cfg_.image_size) +
                         " x " + std::to_string(cfg_.image_size) + "]");
  ForwardResult r;
  for (const auto& [name, t] : params_.tensors)
    r.params.emplace(name, trainable ? g.variable(t, name) : g.constant(t));

  Var x = g.constant(images);
  r.f_represent = FeatureExtractor::apply(r.params, x);
  if (cfg_.has_adaptation()) r.f_adapt = AdaptationLayer::apply(r.params, r.f_represent);

  switch (cfg_.variant) {
    case Variant::kBaseline:
      r.probs_s = head(r.params, "cls", r.f_represent);
      break;
    case Variant::kGrlOnly:
      r.probs_s = head(r.params, "cls", r.f_represent);
      r.domain_features = r.f_represent;
      break;
    case Variant::kGrlAdaptD:
      r.probs_s = head(r.params, "cls", r.f_represent);
      r.domain_features = r.f_adapt;
      break;
    case Variant::kGrlAdaptSD:
      r.probs_s = head(r.params, "cls", *r.f_adapt);
      r.domain_features = r.f_adapt;
      break;
    case Variant::kGrlAdaptCoral:
      r.probs_s = head(r.params, "cls", *r.f_adapt);
      r.domain_features = r.f_adapt;
      r.features_for_coral = r.f_adapt;
      break;
  }
  if (r.domain_features) r.probs_d = head(r.params, "dom", grl(*r.domain_features, cfg_.grl));
  return r;
}

void Model::set_grl(const GrlConfig& grl) {
  grl.validate();
  cfg_.grl = grl;
}

}  // namespace smokeda
