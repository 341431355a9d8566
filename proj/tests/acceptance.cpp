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

// Acceptance suite: one PASS/FAIL line per criterion. Criterion numbers given
// as arguments select a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>
#include <thread>

#include "smokeda/cli.hpp"
#include "smokeda/errors.hpp"
#include "smokeda/experiments.hpp"
#include "smokeda/files.hpp"
#include "smokeda/losses.hpp"
#include "smokeda/metrics.hpp"
#include "smokeda/synth.hpp"
#include "smokeda/training.hpp"
#include "smokeda/tsne.hpp"
#include "test_util.hpp"

using namespace smokeda;
using namespace smokeda::testing;
namespace fs = std::filesystem;

namespace {

constexpr double kFdEps = 1e-5;
constexpr double kGradTol = 1e-4;
constexpr int kGradInstances = 10;
constexpr double kHingeGuard = 1e-3;
constexpr double kKinkGuard = 1e-4;
constexpr double kCoralOracleTol = 1e-10;
constexpr double kCoralPropertyTol = 1e-12;
constexpr double kMetricTol = 1e-12;
constexpr double kRoundedEdTol = 0.0002;
constexpr double kMinCdGain = 0.05;
constexpr double kGapOffBand = 0.03;
constexpr double kMinPurity = 0.9;
constexpr int kPurityK = 5;

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t i = 1; i <= n; ++i) s.push_back(i);
  return s;
}

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// --- 1: gradients ------------------------------------------------------------

using Instance = std::function<double(Rng&)>;

// Softmax logits whose rows stay clear of the hinge's argmax switch.
Tensor guarded_logits(Rng& rng, std::size_t n) {
  for (;;) {
    Tensor z = random_tensor(rng, {n, 2}, -2, 2);
    bool ok = true;
    for (std::size_t r = 0; r < n; ++r) ok = ok && std::abs(std::tanh(0.5 * (z.at(r, 0) - z.at(r, 1)))) > kHingeGuard;
    if (ok) return z;
  }
}

double check(const ScalarBuilder& build, const Tensor& x) { return grad_check(build, x, kFdEps); }

std::vector<std::pair<std::string, Instance>> op_instances() {
  std::vector<std::pair<std::string, Instance>> ops;
  auto ws = [](Graph& g, Var out) { return weighted_sum(g, out, 99); };

  ops.emplace_back("affine", [=](Rng& rng) {
    const Tensor x = random_tensor(rng, {5, 4}), w = random_tensor(rng, {4, 3}), b = random_tensor(rng, {3});
    return std::max({check([&](Graph& g, Var v) { return ws(g, affine(v, g.constant(w), g.constant(b))); }, x),
                     check([&](Graph& g, Var v) { return ws(g, affine(g.constant(x), v, g.constant(b))); }, w),
                     check([&](Graph& g, Var v) { return ws(g, affine(g.constant(x), g.constant(w), v)); }, b)});
  });
  ops.emplace_back("matmul", [=](Rng& rng) {
    const Tensor a = random_tensor(rng, {3, 5}), b = random_tensor(rng, {5, 2});
    return std::max(check([&](Graph& g, Var v) { return ws(g, matmul(v, g.constant(b))); }, a),
                    check([&](Graph& g, Var v) { return ws(g, matmul(g.constant(a), v)); }, b));
  });
  ops.emplace_back("conv2d", [=](Rng& rng) {
    const int stride = 1 + static_cast<int>(rng.uniform_int(2)), pad = static_cast<int>(rng.uniform_int(2));
    const Tensor x = random_tensor(rng, {2, 3, 6, 6}), k = random_tensor(rng, {4, 3, 3, 3});
    return std::max(check([&](Graph& g, Var v) { return ws(g, conv2d(v, g.constant(k), stride, pad)); }, x),
                    check([&](Graph& g, Var v) { return ws(g, conv2d(g.constant(x), v, stride, pad)); }, k));
  });
  ops.emplace_back("add_channel_bias", [=](Rng& rng) {
    const Tensor x = random_tensor(rng, {2, 3, 4, 4}), b = random_tensor(rng, {3});
    return std::max(check([&](Graph& g, Var v) { return ws(g, add_channel_bias(v, g.constant(b))); }, x),
                    check([&](Graph& g, Var v) { return ws(g, add_channel_bias(g.constant(x), v)); }, b));
  });
  ops.emplace_back("relu", [=](Rng& rng) {
    return check([&](Graph& g, Var v) { return ws(g, relu(v)); }, random_tensor(rng, {4, 6}));
  });
  ops.emplace_back("maxpool2", [=](Rng& rng) {
    return check([&](Graph& g, Var v) { return ws(g, maxpool2(v)); }, random_tensor(rng, {2, 3, 6, 6}));
  });
  ops.emplace_back("reshape/flatten", [=](Rng& rng) {
    const Tensor x = random_tensor(rng, {2, 3, 2, 2});
    return std::max(check([&](Graph& g, Var v) { return ws(g, reshape(v, {4, 6})); }, x),
                    check([&](Graph& g, Var v) { return ws(g, flatten(v)); }, x));
  });
  ops.emplace_back("softmax", [=](Rng& rng) {
    return check([&](Graph& g, Var v) { return ws(g, softmax(v)); }, random_tensor(rng, {4, 3}, -3, 3));
  });
  ops.emplace_back("grl", [=](Rng& rng) {
    // Differences see the identity forward; backward must be phi times them.
    const double phi = rng.uniform(-2.0, -0.1);
    const Tensor x = random_tensor(rng, {3, 4});
    const ScalarBuilder inner = [&](Graph& g, Var v) { return ws(g, v); };
    const Tensor numeric = finite_diff_grad([&](const Tensor& p) { return eval_scalar(inner, p); }, x, kFdEps);
    Tensor expected = numeric;
    for (auto& e : expected.data()) e *= phi;
    return max_relative_error(analytic_grad([&](Graph& g, Var v) { return ws(g, grl(v, GrlConfig{phi})); }, x),
                              expected);
  });
  ops.emplace_back("add/sub/scale", [=](Rng& rng) {
    const Tensor x = random_tensor(rng, {3, 3}), y = random_tensor(rng, {3, 3});
    const double c = rng.uniform(-2, 2);
    return std::max(check([&](Graph& g, Var v) { return ws(g, add(v, g.constant(y))); }, x),
                    check([&](Graph& g, Var v) { return ws(g, scale(sub(g.constant(y), v), c)); }, x));
  });
  ops.emplace_back("sum/sum_squares", [=](Rng& rng) {
    const Tensor x = random_tensor(rng, {3, 4});
    return std::max(check([&](Graph&, Var v) { return sum(v); }, x),
                    check([&](Graph&, Var v) { return sum_squares(v); }, x));
  });
  ops.emplace_back("select_rows", [=](Rng& rng) {
    return check([&](Graph& g, Var v) { return ws(g, select_rows(v, {3, 0, 3})); }, random_tensor(rng, {4, 3}));
  });
  ops.emplace_back("softmax_cross_entropy", [=](Rng& rng) {
    const std::vector<int> y{0, 1, 1, 0, 1};
    return check([&](Graph&, Var v) { return softmax_cross_entropy(softmax(v), y); }, random_tensor(rng, {5, 2}, -2, 2));
  });
  ops.emplace_back("hinge_domain_loss", [=](Rng& rng) {
    const std::vector<int> y{0, 1, 1, 0, 1, 1};
    const Tensor z = guarded_logits(rng, 6);
    return std::max(check([&](Graph&, Var v) { return hinge_domain_loss(softmax(v), y, 1); }, z),
                    check([&](Graph&, Var v) { return hinge_domain_loss(softmax(v), y, 2); }, z));
  });
  ops.emplace_back("covariance", [=](Rng& rng) {
    return check([&](Graph& g, Var v) { return ws(g, covariance(v)); }, random_tensor(rng, {6, 3}));
  });
  ops.emplace_back("coral_loss", [=](Rng& rng) {
    const Tensor s = random_tensor(rng, {8, 4}), t = random_tensor(rng, {6, 4}, -1, 2);
    return std::max(check([&](Graph& g, Var v) { return coral_loss(v, g.constant(t)); }, s),
                    check([&](Graph& g, Var v) { return coral_loss(g.constant(s), v); }, t));
  });
  ops.emplace_back("joint_loss", [=](Rng& rng) {
    LossWeights w;
    w.alpha_label = rng.uniform(0.1, 1);
    w.beta_domain = rng.uniform(0.1, 1);
    w.gamma_coral = rng.uniform(0.1, 1);
    return check(
        [&](Graph&, Var v) {
          return joint_loss(sum(select_rows(v, {0})), sum(select_rows(v, {1})), sum(select_rows(v, {2})), w);
        },
        random_tensor(rng, {3, 1}, 0, 2));
  });
  return ops;
}

// Full joint objective of one variant on a random batch. The domain term is
// differenced separately and reversed for parameters below the GRL.
double variant_instance(Variant v, Rng& rng) {
  ModelVariantConfig mc = variant_config(v);
  mc.image_size = 8;
  mc.feature_dim = 6;
  mc.adapt_dim = 3;
  mc.grl.phi = rng.uniform(-1.5, -0.2);
  const Model model(mc, rng.next_u64());
  TrainConfig cfg;
  cfg.variant = mc;
  cfg.weights.alpha_label = rng.uniform(0.3, 1.0);
  cfg.weights.beta_domain = rng.uniform(0.1, 0.6);
  cfg.weights.gamma_coral = rng.uniform(0.2, 1.0);
  cfg.weights.phi = mc.grl.phi;
  cfg.weights.p = 1 + static_cast<int>(rng.uniform_int(2));

  Batch batch;
  batch.half = 4;
  batch.y_s = {1, 1, 0, 1, 1, 0, 1, 0};
  batch.y_d = {0, 0, 1, 0, 1, 1, 1, 1};
  batch.rows = {0, 1, 2, 3, 4, 5, 6, 7};
  for (;;) {
    batch.images = random_tensor(rng, {8, 3, 8, 8}, 0, 1);
    auto probe = build_objective(model, batch, cfg);
    if (min_hinge_gap(probe->graph) > kHingeGuard && min_kink_distance(probe->graph) > kKinkGuard) break;
  }

  auto step = build_objective(model, batch, cfg);
  const auto analytic = parameter_grads(*step);
  const auto& w = cfg.weights;
  double worst = 0.0;
  for (const auto& name : model.parameter_names()) {
    const Tensor& theta = model.params().at(name);
    Tensor numeric(theta.shape());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double plain[2], domain[2];
      for (int side = 0; side < 2; ++side) {
        Model p = model;
        p.params().at(name)[i] += side == 0 ? kFdEps : -kFdEps;
        auto s = build_objective(p, batch, cfg);
        plain[side] = w.alpha_label * s->l_s.value().item() + (s->l_coral ? w.gamma_coral * s->l_coral->value().item() : 0.0);
        domain[side] = s->l_d ? w.beta_domain * s->l_d->value().item() : 0.0;
      }
      const double reversal = name.rfind("dom.", 0) == 0 ? 1.0 : mc.grl.phi;
      numeric[i] = (plain[0] - plain[1]) / (2 * kFdEps) + reversal * (domain[0] - domain[1]) / (2 * kFdEps);
    }
    const auto it = analytic.find(name);
    const Tensor a = it == analytic.end() ? Tensor(theta.shape()) : it->second;
    worst = std::max(worst, max_relative_error(a, numeric));
  }
  return worst;
}

Outcome criterion_1() {
  Outcome o;
  Rng rng(2024);
  double worst = 0.0;
  std::string worst_name;
  auto track = [&](const std::string& name, double err) {
    if (err > worst) {
      worst = err;
      worst_name = name;
    }
    o.require(err < kGradTol, name + " rel err " + fmt("%.3g", err));
  };
  const auto ops = op_instances();
  for (const auto& [name, instance] : ops)
    for (int i = 0; i < kGradInstances; ++i) track(name, instance(rng));
  for (Variant v : ablation_variants())
    for (int i = 0; i < kGradInstances; ++i) track(std::string(variant_name(v)), variant_instance(v, rng));

  // GRL backward is phi times upstream, bit for bit.
  bool exact = true;
  for (int i = 0; i < kGradInstances; ++i) {
    const double phi = rng.uniform(-2.0, 0.0);
    const Tensor x = random_tensor(rng, {4, 5}), up = random_tensor(rng, {4, 5});
    Graph g;
    Var in = g.variable(x);
    const Gradients grads = g.backward(sum(matmul(reshape(grl(in, GrlConfig{phi}), {1, 20}),
                                                  g.constant(up.reshaped({20, 1})))));
    for (std::size_t k = 0; k < x.size(); ++k) exact = exact && grads[in][k] == phi * up[k];
  }
  o.require(exact, "GRL backward differs from phi * upstream");
  o.detail << ops.size() << " ops and " << ablation_variants().size() << " variants x " << kGradInstances
           << " instances, worst rel err " << fmt("%.2e", worst) << " (" << worst_name << ")";
  return o;
}

// --- 2: CORAL oracle -----------------------------------------------------------

double brute_coral(const Tensor& s, const Tensor& t) {
  auto cov = [](const Tensor& f) {
    const std::size_t n = f.dim(0), d = f.dim(1);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) mean[j] += f.at(i, j);
    for (auto& m : mean) m /= static_cast<double>(n);
    std::vector<double> c(d * d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b) {
        for (std::size_t i = 0; i < n; ++i) c[a * d + b] += (f.at(i, a) - mean[a]) * (f.at(i, b) - mean[b]);
        c[a * d + b] /= static_cast<double>(n - 1);
      }
    return c;
  };
  const auto cs = cov(s), ct = cov(t);
  const double d = static_cast<double>(s.dim(1));
  double fro = 0.0;
  for (std::size_t k = 0; k < cs.size(); ++k) fro += (cs[k] - ct[k]) * (cs[k] - ct[k]);
  return fro / (4.0 * d * d);
}

double coral_of(const Tensor& s, const Tensor& t) {
  Graph g;
  return coral_loss(g.constant(s), g.constant(t)).value().item();
}

Outcome criterion_2() {
  Outcome o;
  Rng rng(77);
  double oracle = 0.0, self = 0.0, sym = 0.0, shift = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor s = random_tensor(rng, {8, 4}, -2, 2), t = random_tensor(rng, {8, 4}, -1, 3);
    const double st = coral_of(s, t);
    oracle = std::max(oracle, std::abs(st - brute_coral(s, t)));
    self = std::max(self, std::abs(coral_of(s, s)));
    sym = std::max(sym, std::abs(st - coral_of(t, s)));
    Tensor s2 = s, t2 = t;
    for (std::size_t j = 0; j < 4; ++j) {
      const double cs = rng.uniform(-5, 5), ct = rng.uniform(-5, 5);
      for (std::size_t i = 0; i < 8; ++i) {
        s2.at(i, j) += cs;
        t2.at(i, j) += ct;
      }
    }
    shift = std::max(shift, std::abs(st - coral_of(s2, t2)));
  }
  o.require(oracle <= kCoralOracleTol, "oracle");
  o.require(self == 0.0, "coral(F, F) != 0");
  o.require(sym <= kCoralPropertyTol, "symmetry");
  o.require(shift <= kCoralPropertyTol, "translation");
  o.detail << "100 random 8x4 pairs: |oracle diff| " << fmt("%.1e", oracle) << ", |coral(F,F)| " << fmt("%.1e", self)
           << ", |asym| " << fmt("%.1e", sym) << ", |shift diff| " << fmt("%.1e", shift);
  return o;
}

// --- 3: metrics ------------------------------------------------------------------

Outcome criterion_3() {
  Outcome o;
  ConfusionCounts c;
  c.tp = 469;
  c.fn = 31;
  c.tn = 478;
  c.fp = 22;
  const MetricsReport r = metrics_cd_ed_md(c, 500, 500);
  o.require(std::abs(r.cd - 0.9470) <= kMetricTol, "CD");
  o.require(std::abs(r.md - 0.0620) <= kMetricTol, "MD");
  o.require(std::abs(r.ed - 22.0 / 491.0) <= kMetricTol, "ED exact");
  o.require(std::abs(r.ed - 0.0448) <= kRoundedEdTol && std::abs(r.ed - 0.0447) <= kRoundedEdTol, "ED vs rounded value");

  ConfusionCounts perfect;
  perfect.tp = 500;
  perfect.tn = 500;
  const MetricsReport p = metrics_cd_ed_md(perfect, 500, 500);
  o.require(p.cd == 1.0 && p.ed == 0.0 && p.md == 0.0, "all correct");

  ConfusionCounts silent;
  silent.tn = 300;
  silent.fn = 700;
  const MetricsReport s = metrics_cd_ed_md(silent, 700, 300);
  o.require(s.md == 1.0 && s.ed == 0.0 && s.cd == 300.0 / 1000.0, "all predicted non-smoke");

  bool threw = false;
  try {
    metrics_cd_ed_md(c, 400, 500);
  } catch (const ContractError&) {
    threw = true;
  }
  o.require(threw, "inconsistent counts accepted");
  o.detail << "CD " << fmt("%.4f", r.cd) << ", MD " << fmt("%.4f", r.md) << ", ED " << fmt("%.6f", r.ed)
           << "; degenerate predictors exact";
  return o;
}

// --- 4, 5: adaptation versus the pooled baseline -----------------------------------

struct Comparison {
  std::vector<MetricsReport> baseline, adapted;
  double cd_gain = 0.0, md_base = 0.0, md_adapted = 0.0;
};

Comparison compare(double gap, int n_seeds) {
  DatasetSpec spec;
  spec.gap_strength = gap;
  spec.n_source_smoke = 1000;
  spec.n_target_smoke = 500;
  spec.image_size = 32;
  const Corpus corpus = build_dataset(spec);
  TrainConfig base;
  base.epochs = 20;
  base.variant.image_size = 32;

  const auto seeds = seed_range(static_cast<std::uint64_t>(n_seeds));
  Comparison c;
  c.baseline.resize(seeds.size());
  c.adapted.resize(seeds.size());
  run_parallel(2 * seeds.size(), jobs(), [&](std::size_t task) {
    TrainConfig cfg = base;
    cfg.seed = seeds[task / 2];
    cfg.variant.variant = task % 2 == 0 ? Variant::kBaseline : Variant::kGrlAdaptCoral;
    (task % 2 == 0 ? c.baseline : c.adapted)[task / 2] = train_and_evaluate(corpus, cfg);
  });
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    const double n = static_cast<double>(seeds.size());
    c.cd_gain += (c.adapted[i].cd - c.baseline[i].cd) / n;
    c.md_base += c.baseline[i].md / n;
    c.md_adapted += c.adapted[i].md / n;
  }
  return c;
}

std::string per_seed(const Comparison& c) {
  std::ostringstream s;
  s << "; per-seed CD baseline/adapted:";
  for (std::size_t i = 0; i < c.baseline.size(); ++i)
    s << " " << fmt("%.4f", c.baseline[i].cd) << "/" << fmt("%.4f", c.adapted[i].cd);
  return s.str();
}

Outcome criterion_4() {
  Outcome o;
  const Comparison c = compare(1.0, 5);
  o.require(c.cd_gain >= kMinCdGain, "mean CD gain " + fmt("%.4f", c.cd_gain) + " < " + fmt("%.2f", kMinCdGain));
  o.require(c.md_adapted < c.md_base, "MD not lower");
  o.detail << "gap 1, 5 seeds: mean CD gain " << fmt("%+.4f", c.cd_gain) << ", mean MD baseline "
           << fmt("%.4f", c.md_base) << " vs adapted " << fmt("%.4f", c.md_adapted) << per_seed(c);
  return o;
}

Outcome criterion_5() {
  Outcome o;
  const Comparison c = compare(0.0, 5);
  o.require(std::abs(c.cd_gain) <= kGapOffBand, "mean CD difference outside the band");
  o.detail << "gap 0, 5 seeds: mean CD difference " << fmt("%+.4f", c.cd_gain) << per_seed(c);
  return o;
}

// --- 6: beta sweep ---------------------------------------------------------------

// Full-size corpus and schedule: 54 runs, about 20 minutes on one core.
Outcome criterion_6() {
  Outcome o;
  const DatasetSpec spec;
  const TrainConfig base;
  const std::vector<double> betas{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  const auto rows = sweep_beta(build_dataset(spec), base, betas, true, seed_range(3), jobs(), 0.2);
  const auto series = sweep_cd_series(rows);
  if (series.size() != 2) {
    o.require(false, "expected two curves");
    return o;
  }
  auto best = [](const Series& s) {
    return static_cast<std::size_t>(std::max_element(s.y.begin(), s.y.end()) - s.y.begin());
  };
  const std::size_t b0 = best(series[0]), b1 = best(series[1]);
  const double overall_beta = series[1].y[b1] >= series[0].y[b0] ? series[1].x[b1] : series[0].x[b0];
  o.require(overall_beta < 0.5, "best beta " + fmt("%.1f", overall_beta) + " >= 0.5");
  o.require(series[1].y[b1] >= series[0].y[b0], "coral curve best below gamma 0 best");
  o.detail << "9 betas x 3 seeds x 2 curves, default corpus, 20 epochs: best gamma=0 CD " << fmt("%.4f", series[0].y[b0]) << " at "
           << fmt("%.1f", series[0].x[b0]) << ", best gamma=0.2 CD " << fmt("%.4f", series[1].y[b1]) << " at "
           << fmt("%.1f", series[1].x[b1]);
  return o;
}

// --- 7: determinism of the train command -------------------------------------------

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("smokeda_acceptance_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int status = run_cli(args, out, err);
  if (status != 0) std::fprintf(stderr, "%s%s", out.str().c_str(), err.str().c_str());
  return status;
}

Outcome criterion_7() {
  Outcome o;
  TempDir dir("determinism");
  write_file_atomic(dir.path / "config.json", R"({"version": 1, "seed": 3,
    "dataset": {"n_source_smoke": 200, "n_target_smoke": 100, "n_test_smoke": 100, "n_test_nonsmoke": 100},
    "train": {"epochs": 3}})");
  const std::string resolved = (dir.path / "a" / "config.resolved").string();
  o.require(cli({"train", "--config", (dir.path / "config.json").string(), "--out", (dir.path / "a").string()}) == 0,
            "first run");
  o.require(cli({"train", "--config", resolved, "--out", (dir.path / "b").string()}) == 0, "second run");
  o.require(cli({"train", "--config", resolved, "--out", (dir.path / "c").string()}) == 0, "third run");
  for (const char* f : {"losses.csv", "checkpoint.bin", "metrics.csv"}) {
    const bool same = read_file(dir.path / "b" / f) == read_file(dir.path / "c" / f) &&
                      read_file(dir.path / "a" / f) == read_file(dir.path / "b" / f);
    o.require(same, std::string(f) + " differs");
  }
  o.detail << "three train runs from one resolved config: losses.csv, checkpoint.bin, metrics.csv byte-identical ("
           << fs::file_size(dir.path / "a" / "checkpoint.bin") << "-byte checkpoint)";
  return o;
}

// --- 8: t-SNE ----------------------------------------------------------------------

Outcome criterion_8() {
  Outcome o;
  Rng rng(8);
  Tensor x({300, 10});
  std::vector<int> labels;
  for (std::size_t i = 0; i < 300; ++i) {
    const std::size_t c = i / 100;
    for (std::size_t k = 0; k < 10; ++k) x.at(i, k) = rng.normal(k == c ? 8.0 : 0.0, 1.0);
    labels.push_back(static_cast<int>(c));
  }
  const TsneResult r = tsne_embed(x, 30.0, 1000, 1);
  const double purity = knn_purity(r.embedding, labels, kPurityK);
  o.require(purity >= kMinPurity, "purity");
  o.require(r.final_kl < r.initial_kl, "KL did not decrease");

  TempDir dir("tsne");
  const std::string out = (dir.path / "run").string();
  write_file_atomic(dir.path / "config.json", R"({"version": 1, "train": {"variant": "grl_adapt_coral"}})");
  const std::string cfg = (dir.path / "config.json").string();
  const bool ran = cli({"train", "--config", cfg, "--out", out}) == 0 && cli({"tsne", "--config", cfg, "--out", out}) == 0;
  o.require(ran, "train or tsne command failed");
  if (ran) {
    const auto summary = nlohmann::json::parse(read_file(dir.path / "run" / "tsne_summary.json"));
    const double syn_real = summary["embedding"]["synthetic_real"], smoke_non = summary["embedding"]["smoke_nonsmoke"];
    o.require(fs::exists(dir.path / "run" / "tsne.svg"), "no plot");
    o.require(syn_real < smoke_non, "synthetic/real centroids farther apart than smoke/non-smoke");
    o.detail << "clusters: purity " << fmt("%.3f", purity) << ", KL " << fmt("%.3f", r.initial_kl) << " -> "
             << fmt("%.3f", r.final_kl) << "; trained model (" << summary["points"].get<int>()
             << " points): centroid distance synthetic/real " << fmt("%.2f", syn_real) << " vs smoke/non-smoke "
             << fmt("%.2f", smoke_non);
  }
  return o;
}

// --- 9: dataset contract -------------------------------------------------------------

Outcome criterion_9() {
  Outcome o;
  TempDir dir("dataset");
  const std::string a = (dir.path / "a").string(), b = (dir.path / "b").string();
  o.require(cli({"synth", "--out", a}) == 0 && cli({"synth", "--out", b}) == 0, "synth failed");
  std::size_t files = 0;
  bool identical = true;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file() || entry.path().filename() == "config.resolved") continue;
    ++files;
    const fs::path other = fs::path(b) / fs::relative(entry.path(), a);
    identical = identical && fs::exists(other) && read_file(entry.path()) == read_file(other);
  }
  o.require(identical, "corpora differ");
  const auto manifest = read_manifest(fs::path(a) / "manifest.jsonl");
  const std::size_t violations = count_label_violations(manifest);
  o.require(violations == 0, std::to_string(violations) + " rows break the composition rule");

  const Corpus corpus = build_dataset(DatasetSpec{});
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& s : corpus.samples) (s.split == Split::kTest ? test_seeds : train_seeds).insert(s.seed);
  std::size_t shared = 0;
  for (auto s : test_seeds) shared += train_seeds.count(s);
  o.require(shared == 0, "train and test share seeds");
  o.require(manifest.size() == corpus.samples.size(), "manifest size");
  o.detail << manifest.size() << " rows, " << files << " files byte-identical across two runs, " << violations
           << " composition violations, " << shared << " shared train/test seeds";
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", criterion_1}, {"CORAL oracle equivalence", criterion_2},
      {"metric arithmetic", criterion_3},    {"DA ordering at gap 1", criterion_4},
      {"gap-off control", criterion_5},      {"beta sweep shape", criterion_6},
      {"train determinism", criterion_7},    {"t-SNE sanity", criterion_8},
      {"dataset contract", criterion_9}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += o.pass ? 0 : 1;
    std::printf("criterion %d %s: %s (%.1f s) %s\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL", secs,
                o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
