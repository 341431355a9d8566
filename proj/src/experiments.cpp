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

#include "smokeda/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "smokeda/errors.hpp"

namespace smokeda {

void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(std::max<std::size_t>(count, 1))));
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

MetricsReport train_and_evaluate(const Corpus& corpus, const TrainConfig& cfg) {
  const auto result = train(cfg, corpus);
  return evaluate(result.model, corpus, corpus.indices(Split::kTest));
}

std::vector<Variant> ablation_variants() {
  return {Variant::kBaseline, Variant::kGrlOnly, Variant::kGrlAdaptD, Variant::kGrlAdaptSD,
          Variant::kGrlAdaptCoral};
}

std::vector<AblationRow> run_ablation(const Corpus& corpus, const TrainConfig& base,
                                      std::span<const std::uint64_t> seeds, int jobs) {
  const auto variants = ablation_variants();
  std::vector<AblationRow> rows;
  for (auto seed : seeds)
    for (auto v : variants) rows.push_back({v, seed, {}});
  run_parallel(rows.size(), jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.seed = rows[i].seed;
    cfg.variant.variant = rows[i].variant;
    rows[i].report = train_and_evaluate(corpus, cfg);
    spdlog::info("ablation {} seed {}: CD {:.4f} ED {:.4f} MD {:.4f}", variant_name(rows[i].variant),
                 rows[i].seed, rows[i].report.cd, rows[i].report.ed, rows[i].report.md);
  });
  return rows;
}

MeanMetrics mean_metrics(const std::vector<AblationRow>& rows, Variant v) {
  MeanMetrics m;
  std::size_t n = 0;
  for (const auto& r : rows)
    if (r.variant == v) {
      m.cd += r.report.cd;
      m.ed += r.report.ed;
      m.md += r.report.md;
      ++n;
    }
  if (n == 0) throw ContractError("no rows for variant " + std::string(variant_name(v)));
  m.cd /= static_cast<double>(n);
  m.ed /= static_cast<double>(n);
  m.md /= static_cast<double>(n);
  return m;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "architecture,seed,CD,ED,MD\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%s,%llu,%.17g,%.17g,%.17g\n", std::string(variant_name(r.variant)).c_str(),
                  static_cast<unsigned long long>(r.seed), r.report.cd, r.report.ed, r.report.md);
    out += line;
  }
  for (auto v : ablation_variants()) {
    if (std::none_of(rows.begin(), rows.end(), [&](const AblationRow& r) { return r.variant == v; })) continue;
    const auto m = mean_metrics(rows, v);
    std::snprintf(line, sizeof line, "%s,mean,%.17g,%.17g,%.17g\n", std::string(variant_name(v)).c_str(), m.cd,
                  m.ed, m.md);
    out += line;
  }
  return out;
}

namespace {

// One dataset per sweep point, shared by that point's seeds.
std::vector<SweepRow> sweep_datasets(const std::vector<DatasetSpec>& specs, std::span<const double> params,
                                     const TrainConfig& base, std::span<const std::uint64_t> seeds, int jobs) {
  std::vector<SweepRow> rows;
  for (double p : params)
    for (auto seed : seeds) rows.push_back({p, base.weights.gamma_coral, seed, {}});
  for (std::size_t k = 0; k < specs.size(); ++k) {
    const Corpus corpus = build_dataset(specs[k]);
    run_parallel(seeds.size(), jobs, [&](std::size_t s) {
      TrainConfig cfg = base;
      cfg.seed = seeds[s];
      rows[k * seeds.size() + s].report = train_and_evaluate(corpus, cfg);
    });
  }
  return rows;
}

}  // namespace

std::vector<SweepRow> sweep_source_target_ratio(const DatasetSpec& dataset, const TrainConfig& base,
                                                std::span<const double> ratios,
                                                std::span<const std::uint64_t> seeds, int jobs) {
  std::vector<DatasetSpec> specs;
  for (double r : ratios) {
    if (!(r >= 1.0)) throw ConfigError("source:target ratios must be >= 1");
    DatasetSpec s = dataset;
    s.n_source_smoke =
        static_cast<int>(std::lround(r * dataset.n_target_smoke * static_cast<double>(dataset.augment_factor)));
    specs.push_back(s);
  }
  return sweep_datasets(specs, ratios, base, seeds, jobs);
}

std::vector<SweepRow> sweep_nonsmoke_ratio(const DatasetSpec& dataset, const TrainConfig& base,
                                           std::span<const double> ratios,
                                           std::span<const std::uint64_t> seeds, int jobs) {
  std::vector<DatasetSpec> specs;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("non-smoke ratios must be positive");
    DatasetSpec s = dataset;
    s.n_nonsmoke_per_dataset = -1;
    s.nonsmoke_to_smoke_ratio = r;
    specs.push_back(s);
  }
  return sweep_datasets(specs, ratios, base, seeds, jobs);
}

std::vector<SweepRow> sweep_beta(const Corpus& corpus, const TrainConfig& base, std::span<const double> betas,
                                 bool with_coral, std::span<const std::uint64_t> seeds, int jobs,
                                 double coral_gamma) {
  std::vector<double> gammas{0.0};
  if (with_coral) gammas.push_back(coral_gamma);
  std::vector<SweepRow> rows;
  for (double g : gammas)
    for (double b : betas) {
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("betas must lie in (0, 1)");
      for (auto seed : seeds) rows.push_back({b, g, seed, {}});
    }
  run_parallel(rows.size(), jobs, [&](std::size_t i) {
    TrainConfig cfg = base;
    cfg.seed = rows[i].seed;
    cfg.variant.variant = Variant::kGrlAdaptCoral;
    cfg.weights.beta_domain = rows[i].param;
    cfg.weights.alpha_label = 1.0 - rows[i].param;
    cfg.weights.gamma_coral = rows[i].gamma;
    cfg.weights.unit_sum = true;
    rows[i].report = train_and_evaluate(corpus, cfg);
    spdlog::info("beta {} gamma {} seed {}: CD {:.4f}", rows[i].param, rows[i].gamma, rows[i].seed,
                 rows[i].report.cd);
  });
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows, bool with_gamma) {
  std::string out = with_gamma ? "param,seed,CD,ED,MD,gamma\n" : "param,seed,CD,ED,MD\n";
  char line[192];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%.17g,%llu,%.17g,%.17g,%.17g", r.param, static_cast<unsigned long long>(r.seed),
                  r.report.cd, r.report.ed, r.report.md);
    out += line;
    if (with_gamma) {
      std::snprintf(line, sizeof line, ",%.17g", r.gamma);
      out += line;
    }
    out += '\n';
  }
  return out;
}

std::vector<Series> sweep_cd_series(const std::vector<SweepRow>& rows) {
  std::map<double, std::map<double, std::pair<double, int>>> acc;
  for (const auto& r : rows) {
    auto& cell = acc[r.gamma][r.param];
    cell.first += r.report.cd;
    cell.second += 1;
  }
  std::vector<Series> out;
  for (const auto& [gamma, points] : acc) {
    char name[48];
    std::snprintf(name, sizeof name, "gamma_coral = %g", gamma);
    Series s{name, {}, {}};
    for (const auto& [param, cell] : points) {
      s.x.push_back(param);
      s.y.push_back(cell.first / cell.second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace smokeda
