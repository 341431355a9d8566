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

#include "smokeda/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <spdlog/spdlog.h>

#include "smokeda/errors.hpp"
#include "smokeda/files.hpp"

namespace smokeda {

std::string_view coral_pairing_name(CoralPairing p) {
  return p == CoralPairing::kSmokeOnly ? "smoke_only" : "all";
}

CoralPairing parse_coral_pairing(std::string_view name) {
  if (name == "smoke_only") return CoralPairing::kSmokeOnly;
  if (name == "all") return CoralPairing::kAll;
  throw ConfigError("unknown coral pairing: " + std::string(name));
}

void TrainConfig::validate() const {
  if (batch_size < 2 || batch_size % 2 != 0) throw ConfigError("batch_size must be even and >= 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(lr_decay > 0.0 && lr_decay <= 1.0)) throw ConfigError("lr_decay must lie in (0, 1]");
  if (phi_ramp_epochs < 0) throw ConfigError("phi_ramp_epochs must be non-negative");
  weights.validate();
  variant.validate();
}

bool TrainConfig::needs_coral_smoke() const {
  return variant.variant == Variant::kGrlAdaptCoral && weights.gamma_coral > 0.0 &&
         coral_pairing == CoralPairing::kSmokeOnly;
}

std::vector<std::size_t> Batch::coral_rows(bool source, CoralPairing pairing) const {
  std::vector<std::size_t> out;
  const std::size_t begin = source ? 0 : half;
  for (std::size_t i = begin; i < begin + half; ++i)
    if (pairing == CoralPairing::kAll || y_s[i] == 1) out.push_back(i);
  return out;
}

// --- sampling --------------------------------------------------------------

BatchSampler::BatchSampler(const Corpus& corpus, std::vector<std::size_t> source,
                           std::vector<std::size_t> target, int batch_size, bool coral_smoke,
                           std::uint64_t seed)
    : corpus_(&corpus),
      half_(static_cast<std::size_t>(batch_size / 2)),
      coral_smoke_(coral_smoke),
      rng_(seed) {
  if (batch_size < 2 || batch_size % 2 != 0) throw ContractError("batch_size must be even and >= 2");
  if (source.empty() || target.empty()) throw ContractError("BatchSampler: empty source or target pool");
  if (source.size() < half_ || target.size() < half_)
    throw ContractError("BatchSampler: pools of " + std::to_string(source.size()) + " source and " +
                        std::to_string(target.size()) + " target rows cannot fill half batches of " +
                        std::to_string(half_));
  source_.order = std::move(source);
  target_.order = std::move(target);
  rng_.shuffle(source_.order.begin(), source_.order.end());
  rng_.shuffle(target_.order.begin(), target_.order.end());
}

std::size_t BatchSampler::steps_per_epoch() const {
  return std::max(source_.order.size(), target_.order.size()) / half_;
}

std::size_t BatchSampler::count_smoke(std::span<const std::size_t> rows) const {
  std::size_t n = 0;
  for (auto r : rows) n += corpus_->samples[r].y_s == 1;
  return n;
}

std::vector<std::size_t> BatchSampler::take(Pool& pool, bool source) {
  if (pool.cursor + half_ > pool.order.size()) {
    rng_.shuffle(pool.order.begin(), pool.order.end());
    pool.cursor = 0;
  }
  auto begin = pool.order.begin() + static_cast<std::ptrdiff_t>(pool.cursor);
  if (coral_smoke_) {
    int attempt = 0;
    while (count_smoke({&*begin, half_}) < 2) {
      if (++attempt > kMaxResample)
        throw BatchCompositionError(std::string("cannot draw 2 smoke rows into the ") +
                                    (source ? "source" : "target") + " half after " +
                                    std::to_string(kMaxResample) + " resamples");
      // Reshuffle the unused rows; when they are too few to satisfy the
      // constraint, start a fresh pass over the pool instead.
      const std::size_t left = static_cast<std::size_t>(pool.order.end() - begin);
      if (attempt > kMaxResample / 2 || count_smoke({&*begin, left}) < 2) {
        pool.cursor = 0;
        begin = pool.order.begin();
      }
      rng_.shuffle(begin, pool.order.end());
    }
  }
  std::vector<std::size_t> rows(begin, begin + static_cast<std::ptrdiff_t>(half_));
  pool.cursor += half_;
  return rows;
}

Batch BatchSampler::next() {
  Batch b;
  b.half = half_;
  b.rows = take(source_, true);
  const auto t = take(target_, false);
  b.rows.insert(b.rows.end(), t.begin(), t.end());
  for (auto r : b.rows) {
    b.y_s.push_back(corpus_->samples[r].y_s);
    b.y_d.push_back(corpus_->samples[r].y_d);
  }
  b.images = stack_images(*corpus_, b.rows);
  return b;
}

// --- optimization ----------------------------------------------------------

void sgd_step(ModelParams& params, const std::map<std::string, Tensor>& grads, double lr,
              double momentum, Velocity& velocity) {
  for (const auto& [name, g] : grads) {
    if (!g.all_finite()) throw TrainingAborted("non-finite gradient for parameter " + name);
  }
  for (auto& [name, theta] : params.tensors) {
    const auto it = grads.find(name);
    if (it == grads.end()) throw ContractError("sgd_step: no gradient for parameter " + name);
    const Tensor& g = it->second;
    if (g.shape() != theta.shape())
      throw DimensionError("sgd_step: gradient of " + name + " has shape " + to_string(g.shape()));
    auto [vit, inserted] = velocity.try_emplace(name, theta.shape(), 0.0);
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = momentum * v[i] - lr * g[i];
      theta[i] += v[i];
    }
  }
}

std::unique_ptr<StepGraph> build_objective(const Model& model, const Batch& batch, const TrainConfig& cfg) {
  auto step = std::make_unique<StepGraph>();
  step->forward = model.forward(step->graph, batch.images);
  const ForwardResult& fr = step->forward;
  step->l_s = softmax_cross_entropy(fr.probs_s, batch.y_s);
  if (fr.probs_d) step->l_d = hinge_domain_loss(*fr.probs_d, batch.y_d, cfg.weights.p);
  if (fr.features_for_coral && cfg.weights.gamma_coral > 0.0) {
    const auto src = batch.coral_rows(true, cfg.coral_pairing);
    const auto tgt = batch.coral_rows(false, cfg.coral_pairing);
    step->l_coral = coral_loss(select_rows(*fr.features_for_coral, src),
                               select_rows(*fr.features_for_coral, tgt));
  }
  step->joint = joint_loss(step->l_s, step->l_d, step->l_coral, cfg.weights);
  return step;
}

std::map<std::string, Tensor> parameter_grads(StepGraph& step) {
  const Gradients grads = step.graph.backward(step.joint);
  std::map<std::string, Tensor> out;
  for (const auto& [name, var] : step.forward.params)
    if (grads.contains(var)) out.emplace(name, grads[var]);
  return out;
}

Model initial_model(const TrainConfig& cfg) {
  ModelVariantConfig v = cfg.variant;
  v.grl.phi = cfg.weights.phi;
  return Model(v, derive_seed(cfg.seed, {hash_tag("init")}));
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus, const TrainHooks& hooks) {
  cfg.validate();
  TrainResult result{initial_model(cfg), {}};
  Model& model = result.model;
  RunRecord& rec = result.record;
  rec.config = cfg;

  BatchSampler sampler(corpus, corpus.indices(Split::kSource), corpus.indices(Split::kTarget),
                       cfg.batch_size, cfg.needs_coral_smoke(),
                       derive_seed(cfg.seed, {hash_tag("batches")}));
  rec.steps_per_epoch = sampler.steps_per_epoch();
  const auto test_rows = corpus.indices(Split::kTest);
  Velocity velocity;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr * std::pow(cfg.lr_decay, epoch);
    if (cfg.phi_ramp_epochs > 0 && model.config().has_domain_head()) {
      const double ramp = std::min(1.0, static_cast<double>(epoch + 1) / cfg.phi_ramp_epochs);
      model.set_grl({cfg.weights.phi * ramp});
    }
    for (std::size_t s = 0; s < rec.steps_per_epoch; ++s) {
      const Batch batch = sampler.next();
      auto step = build_objective(model, batch, cfg);
      StepLosses losses;
      losses.l_s = step->l_s.value().item();
      losses.l_d = step->l_d ? step->l_d->value().item() : 0.0;
      losses.l_coral = step->l_coral ? step->l_coral->value().item() : 0.0;
      losses.joint = step->joint.value().item();
      if (!std::isfinite(losses.joint))
        throw TrainingAborted("non-finite joint loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(s));
      sgd_step(model.params(), parameter_grads(*step), lr, cfg.momentum, velocity);
      rec.steps.push_back(losses);
    }
    if (cfg.eval_each_epoch && !test_rows.empty())
      rec.evals.push_back({epoch, evaluate(model, corpus, test_rows)});
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model);
    spdlog::debug("{} epoch {} done, last L_joint {:.6f}", variant_name(cfg.variant.variant), epoch,
                  rec.steps.empty() ? 0.0 : rec.steps.back().joint);
  }
  return result;
}

// --- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'M', 'K', 'D', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { out_.append(s); }
  std::string& str() { return out_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  std::uint32_t u32(const char* what) { return static_cast<std::uint32_t>(le(4, what)); }
  std::uint64_t u64(const char* what) { return le(8, what); }
  std::int32_t i32(const char* what) { return static_cast<std::int32_t>(u32(what)); }
  double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == data_.size(); }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (data_.size() - pos_ < n)
      throw CheckpointError("checkpoint truncated: expected " + std::to_string(n) + " bytes of " + what +
                            " at offset " + std::to_string(pos_) + ", file has " +
                            std::to_string(data_.size()));
  }
  std::uint64_t le(int n, const char* what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void checkpoint_save(const Model& model, const std::filesystem::path& path) {
  const ModelVariantConfig& cfg = model.config();
  Writer w;
  w.bytes({kMagic, sizeof kMagic});
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg.variant));
  w.i32(cfg.image_size);
  w.i32(cfg.channels);
  w.i32(cfg.feature_dim);
  w.i32(cfg.adapt_dim);
  w.f64(cfg.grl.phi);
  w.u64(model.params().init_seed);
  w.u32(static_cast<std::uint32_t>(model.params().tensors.size()));
  for (const auto& [name, t] : model.params().tensors) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.bytes(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) w.u64(d);
    for (double v : t.data()) w.f64(v);
  }
  write_file_atomic(path, w.str());
}

Model checkpoint_load(const std::filesystem::path& path) {
  std::string data;
  try {
    data = read_file(path);
  } catch (const IoError& e) {
    throw CheckpointError(e.what());
  }
  Reader r(std::move(data));
  if (r.bytes(sizeof kMagic, "magic") != std::string_view(kMagic, sizeof kMagic))
    throw CheckpointError("not a checkpoint: expected magic SMKDCKPT in " + path.string());
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    throw CheckpointError("checkpoint version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  ModelVariantConfig cfg;
  const auto variant = r.u32("variant");
  if (variant > static_cast<std::uint32_t>(Variant::kGrlAdaptCoral))
    throw CheckpointError("checkpoint variant id " + std::to_string(variant) + " out of range");
  cfg.variant = static_cast<Variant>(variant);
  cfg.image_size = r.i32("image_size");
  cfg.channels = r.i32("channels");
  cfg.feature_dim = r.i32("feature_dim");
  cfg.adapt_dim = r.i32("adapt_dim");
  cfg.grl.phi = r.f64("phi");
  ModelParams params;
  params.init_seed = r.u64("init_seed");
  const auto count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u32("name length");
    std::string name = r.bytes(len, "name");
    const auto rank = r.u32("rank");
    if (rank == 0 || rank > 4) throw CheckpointError("tensor " + name + " has rank " + std::to_string(rank));
    Shape shape;
    for (std::uint32_t k = 0; k < rank; ++k) shape.push_back(r.u64("dimension"));
    if (std::find(shape.begin(), shape.end(), 0) != shape.end() || shape_numel(shape) > (1u << 28))
      throw CheckpointError("tensor " + name + " has implausible shape " + to_string(shape));
    std::vector<double> values(shape_numel(shape));
    for (auto& v : values) v = r.f64("payload");
    params.tensors.emplace(std::move(name), Tensor(shape, std::move(values)));
  }
  if (!r.done())
    throw CheckpointError("checkpoint has trailing bytes after offset " + std::to_string(r.pos()));
  try {
    return Model(cfg, std::move(params));
  } catch (const Error& e) {
    throw CheckpointError(std::string("checkpoint does not describe a valid model: ") + e.what());
  }
}

// --- export ----------------------------------------------------------------

std::string losses_csv(const RunRecord& record) {
  std::string out = "step,L_s,L_d,L_coral,L_joint\n";
  char line[160];
  for (std::size_t i = 0; i < record.steps.size(); ++i) {
    const auto& s = record.steps[i];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g\n", i, s.l_s, s.l_d, s.l_coral, s.joint);
    out += line;
  }
  return out;
}

std::string epoch_metrics_csv(const RunRecord& record) {
  std::string out = "epoch,CD,ED,MD\n";
  char line[128];
  for (const auto& e : record.evals) {
    std::snprintf(line, sizeof line, "%d,%.17g,%.17g,%.17g\n", e.epoch, e.report.cd, e.report.ed, e.report.md);
    out += line;
  }
  return out;
}

}  // namespace smokeda
