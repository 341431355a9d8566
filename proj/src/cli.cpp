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

#include "smokeda/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <map>
#include <ostream>
#include <set>
#include <tuple>

#include <spdlog/spdlog.h>

#include "smokeda/errors.hpp"
#include "smokeda/experiments.hpp"
#include "smokeda/files.hpp"
#include "smokeda/metrics.hpp"
#include "smokeda/plot.hpp"
#include "smokeda/tsne.hpp"

namespace smokeda {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

// Reads typed fields out of one JSON object and rejects keys it never asked for.
class Section {
 public:
  Section(const ordered_json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    if (!obj_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  template <typename T>
  bool read(const std::string& key, T& dst) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return false;
    convert(*it, dst, where_ + "." + key);
    return true;
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    return Section(it == obj_.end() ? empty() : *it, where_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      if (!seen_.contains(key)) throw ConfigError("unknown config key " + where_ + "." + key);
  }

 private:
  static const ordered_json& empty() {
    static const ordered_json e = ordered_json::object();
    return e;
  }

  static void convert(const ordered_json& v, int& dst, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
    dst = v.get<int>();
  }
  static void convert(const ordered_json& v, std::uint64_t& dst, const std::string& where) {
    if (!v.is_number_unsigned()) throw ConfigError(where + " must be a non-negative integer");
    dst = v.get<std::uint64_t>();
  }
  static void convert(const ordered_json& v, double& dst, const std::string& where) {
    if (!v.is_number()) throw ConfigError(where + " must be a number");
    dst = v.get<double>();
  }
  static void convert(const ordered_json& v, bool& dst, const std::string& where) {
    if (!v.is_boolean()) throw ConfigError(where + " must be true or false");
    dst = v.get<bool>();
  }
  static void convert(const ordered_json& v, std::string& dst, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + " must be a string");
    dst = v.get<std::string>();
  }
  template <typename T>
  static void convert(const ordered_json& v, std::vector<T>& dst, const std::string& where) {
    if (!v.is_array()) throw ConfigError(where + " must be an array");
    dst.clear();
    for (std::size_t i = 0; i < v.size(); ++i) {
      T item{};
      convert(v[i], item, where + "[" + std::to_string(i) + "]");
      dst.push_back(item);
    }
  }

  const ordered_json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::uint64_t env_seed() {
  const char* raw = std::getenv("SMOKEDA_SEED");
  if (raw == nullptr || *raw == '\0') return ExperimentConfig{}.seed;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (*end != '\0' || raw[0] == '-') throw ConfigError(std::string("SMOKEDA_SEED is not a seed: ") + raw);
  return v;
}

void finalize(ExperimentConfig& cfg) {
  if (cfg.n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
  if (cfg.seeds.empty())
    for (int i = 0; i < cfg.n_seeds; ++i) cfg.seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  cfg.n_seeds = static_cast<int>(cfg.seeds.size());
  cfg.train.variant.image_size = cfg.dataset.image_size;
  cfg.dataset.validate();
  cfg.train.validate();
  const auto& w = cfg.sweep.which;
  if (w != "ratio_st" && w != "ratio_ns" && w != "beta") throw ConfigError("sweep.which must be ratio_st, ratio_ns or beta");
  if (cfg.tsne.per_group < 1) throw ConfigError("tsne.per_group must be >= 1");
  if (cfg.tsne.iterations < 1) throw ConfigError("tsne.iterations must be >= 1");
}

std::string fmt_metrics(const MetricsReport& r) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "CD %.4f  ED %.4f  MD %.4f", r.cd, r.ed, r.md);
  return buf;
}

Corpus load_or_build(const ExperimentConfig& cfg) {
  if (!cfg.data_dir.empty()) {
    spdlog::info("loading corpus from {}", cfg.data_dir);
    return load_corpus(cfg.data_dir, cfg.dataset);
  }
  return build_dataset(cfg.dataset);
}

void write_manifest(const Corpus& corpus, const fs::path& out) {
  std::string text;
  for (const auto& row : corpus.manifest()) text += manifest_line(row) + '\n';
  write_file_atomic(out / "manifest.jsonl", text);
}

void print_corpus_summary(const Corpus& corpus, std::ostream& os) {
  std::map<std::tuple<Split, int, int>, std::size_t> counts;
  for (const auto& s : corpus.samples) ++counts[{s.split, s.y_d, s.y_s}];
  os << "split   domain     label      count\n";
  for (const auto& [key, n] : counts) {
    const auto [split, y_d, y_s] = key;
    char line[96];
    std::snprintf(line, sizeof line, "%-7s %-10s %-10s %5zu\n", std::string(split_name(split)).c_str(),
                  y_d == 0 ? "synthetic" : "real", y_s == 1 ? "smoke" : "non-smoke", n);
    os << line;
  }
  os << "total " << corpus.samples.size() << " rows\n";
}

void cmd_synth(const ExperimentConfig& cfg, std::ostream& os) {
  const Corpus corpus = build_dataset(cfg.dataset);
  write_corpus(corpus, cfg.out);
  print_corpus_summary(corpus, os);
  os << "manifest: " << (fs::path(cfg.out) / "manifest.jsonl").string() << "\n";
}

void cmd_train(const ExperimentConfig& cfg, std::ostream& os) {
  const fs::path out = cfg.out;
  const Corpus corpus = load_or_build(cfg);
  write_manifest(corpus, out);
  TrainHooks hooks;
  hooks.on_epoch_end = [&](int, const Model& m) { checkpoint_save(m, out / "checkpoint.bin"); };
  TrainResult result = [&] {
    try {
      return train(cfg.train, corpus, hooks);
    } catch (const TrainingAborted&) {
      if (fs::exists(out / "checkpoint.bin"))
        spdlog::error("training aborted; last completed epoch kept in {}", (out / "checkpoint.bin").string());
      throw;
    }
  }();
  checkpoint_save(result.model, out / "checkpoint.bin");
  write_file_atomic(out / "losses.csv", losses_csv(result.record));

  const auto test_rows = corpus.indices(Split::kTest);
  const MetricsReport final_report = evaluate(result.model, corpus, test_rows);
  RunRecord record = result.record;
  if (record.evals.empty() || record.evals.back().epoch != cfg.train.epochs)
    record.evals.push_back({cfg.train.epochs, final_report});
  write_file_atomic(out / "metrics.csv", epoch_metrics_csv(record));

  os << variant_name(cfg.train.variant.variant) << ": " << result.record.steps.size() << " steps over "
     << cfg.train.epochs << " epochs\n";
  os << "test " << fmt_metrics(final_report) << "  (tp " << final_report.counts.tp << ", fp "
     << final_report.counts.fp << ", tn " << final_report.counts.tn << ", fn " << final_report.counts.fn << ")\n";
}

void cmd_ablation(const ExperimentConfig& cfg, int jobs, std::ostream& os) {
  const fs::path out = cfg.out;
  const Corpus corpus = load_or_build(cfg);
  write_manifest(corpus, out);
  const auto rows = run_ablation(corpus, cfg.train, cfg.seeds, jobs);
  write_file_atomic(out / "ablation.csv", ablation_csv(rows));
  os << "mean over " << cfg.seeds.size() << " seeds\n";
  for (Variant v : ablation_variants()) {
    const MeanMetrics m = mean_metrics(rows, v);
    char line[128];
    std::snprintf(line, sizeof line, "%-16s CD %.4f  ED %.4f  MD %.4f\n", std::string(variant_name(v)).c_str(), m.cd,
                  m.ed, m.md);
    os << line;
  }
}

void cmd_sweep(const ExperimentConfig& cfg, int jobs, std::ostream& os) {
  const fs::path out = cfg.out;
  const std::string& which = cfg.sweep.which;
  std::vector<SweepRow> rows;
  std::string title, x_label;
  if (which == "ratio_st") {
    rows = sweep_source_target_ratio(cfg.dataset, cfg.train, cfg.sweep.ratios_st, cfg.seeds, jobs);
    title = "source : target smoke ratio";
    x_label = "source / target";
  } else if (which == "ratio_ns") {
    rows = sweep_nonsmoke_ratio(cfg.dataset, cfg.train, cfg.sweep.ratios_ns, cfg.seeds, jobs);
    title = "non-smoke : smoke ratio";
    x_label = "non-smoke / smoke";
  } else {
    const Corpus corpus = load_or_build(cfg);
    rows = sweep_beta(corpus, cfg.train, cfg.sweep.betas, cfg.sweep.with_coral, cfg.seeds, jobs,
                      cfg.sweep.coral_gamma);
    title = "domain loss weight";
    x_label = "beta";
  }
  write_file_atomic(out / ("sweep_" + which + ".csv"), sweep_csv(rows, which == "beta"));
  const auto series = sweep_cd_series(rows);
  write_file_atomic(out / ("sweep_" + which + ".svg"), line_plot_svg(series, title, x_label, "mean CD"));
  for (const auto& s : series) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < s.y.size(); ++i)
      if (s.y[i] > s.y[best]) best = i;
    char line[128];
    std::snprintf(line, sizeof line, "%s: best mean CD %.4f at %g\n", s.name.c_str(), s.y[best], s.x[best]);
    os << line;
  }
}

void cmd_tsne(const ExperimentConfig& cfg, std::ostream& os) {
  const fs::path out = cfg.out;
  const fs::path ckpt = cfg.tsne.checkpoint.empty() ? out / "checkpoint.bin" : fs::path(cfg.tsne.checkpoint);
  const Model model = checkpoint_load(ckpt);
  if (model.config().image_size != cfg.dataset.image_size)
    throw ConfigError("checkpoint image size " + std::to_string(model.config().image_size) +
                      " does not match dataset.image_size " + std::to_string(cfg.dataset.image_size));
  const Corpus corpus = load_or_build(cfg);

  std::vector<std::size_t> groups[3];  // synthetic smoke, real smoke, non-smoke
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto& s = corpus.samples[i];
    if (s.split == Split::kTest) continue;
    groups[s.y_s == 0 ? 2 : (s.y_d == 0 ? 0 : 1)].push_back(i);
  }
  Rng rng(derive_seed(cfg.seed, {hash_tag("tsne-sample")}));
  std::vector<std::size_t> rows;
  for (auto& g : groups) {
    rng.shuffle(g.begin(), g.end());
    const std::size_t take = std::min<std::size_t>(g.size(), static_cast<std::size_t>(cfg.tsne.per_group));
    rows.insert(rows.end(), g.begin(), g.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::vector<int> y_s, y_d;
  for (std::size_t r : rows) {
    y_s.push_back(corpus.samples[r].y_s);
    y_d.push_back(corpus.samples[r].y_d);
  }

  Graph g;
  const ForwardResult fr = model.forward(g, stack_images(corpus, rows), false);
  const Tensor features = (fr.features_for_coral ? *fr.features_for_coral : fr.f_represent).value();
  const TsneResult res =
      tsne_embed(features, cfg.tsne.perplexity, cfg.tsne.iterations, derive_seed(cfg.seed, {hash_tag("tsne-embed")}));

  write_file_atomic(out / "embedding.csv", embedding_csv(res.embedding, y_s, y_d));
  emit_feature_plot(res.embedding, y_s, y_d, out / "tsne.svg");
  const CentroidGaps emb = centroid_gaps(res.embedding, y_s, y_d);
  const CentroidGaps feat = centroid_gaps(features, y_s, y_d);
  ordered_json summary{{"points", rows.size()},
                       {"initial_kl", res.initial_kl},
                       {"final_kl", res.final_kl},
                       {"embedding", {{"synthetic_real", emb.synthetic_real}, {"smoke_nonsmoke", emb.smoke_nonsmoke}}},
                       {"features", {{"synthetic_real", feat.synthetic_real}, {"smoke_nonsmoke", feat.smoke_nonsmoke}}}};
  write_file_atomic(out / "tsne_summary.json", summary.dump(2) + "\n");

  char line[160];
  std::snprintf(line, sizeof line, "%zu points, KL %.4f -> %.4f\n", rows.size(), res.initial_kl, res.final_kl);
  os << line;
  std::snprintf(line, sizeof line, "centroid distance synthetic/real %.3f, smoke/non-smoke %.3f\n",
                emb.synthetic_real, emb.smoke_nonsmoke);
  os << line;
}

}  // namespace

std::string config_to_text(const ExperimentConfig& cfg) {
  const auto& d = cfg.dataset;
  const auto& t = cfg.train;
  const auto& w = t.weights;
  ordered_json j;
  j["version"] = cfg.version;
  j["command"] = cfg.command;
  j["seed"] = cfg.seed;
  j["out"] = cfg.out;
  j["data_dir"] = cfg.data_dir;
  j["seeds"] = cfg.seeds;
  j["n_seeds"] = cfg.n_seeds;
  j["dataset"] = {{"master_seed", d.master_seed},
                  {"image_size", d.image_size},
                  {"n_source_smoke", d.n_source_smoke},
                  {"n_target_smoke", d.n_target_smoke},
                  {"n_nonsmoke_per_dataset", d.n_nonsmoke_per_dataset},
                  {"nonsmoke_to_smoke_ratio", d.nonsmoke_to_smoke_ratio},
                  {"gap_strength", d.gap_strength},
                  {"n_test_smoke", d.n_test_smoke},
                  {"n_test_nonsmoke", d.n_test_nonsmoke},
                  {"target_diversity", d.target_diversity},
                  {"hard_negative_fraction", d.hard_negative_fraction},
                  {"test_hard_negative_fraction", d.test_hard_negative_fraction},
                  {"render_scale", d.render_scale},
                  {"crop_margin", d.crop_margin},
                  {"augment_factor", d.augment_factor}};
  j["train"] = {{"variant", variant_name(t.variant.variant)},
                {"seed", t.seed},
                {"batch_size", t.batch_size},
                {"epochs", t.epochs},
                {"lr", t.lr},
                {"momentum", t.momentum},
                {"lr_decay", t.lr_decay},
                {"feature_dim", t.variant.feature_dim},
                {"adapt_dim", t.variant.adapt_dim},
                {"coral_pairing", coral_pairing_name(t.coral_pairing)},
                {"phi_ramp_epochs", t.phi_ramp_epochs},
                {"eval_each_epoch", t.eval_each_epoch},
                {"weights",
                 {{"alpha", w.alpha_label},
                  {"beta", w.beta_domain},
                  {"gamma", w.gamma_coral},
                  {"phi", w.phi},
                  {"p", w.p},
                  {"unit_sum", w.unit_sum}}}};
  j["sweep"] = {{"which", cfg.sweep.which},
                {"ratios_st", cfg.sweep.ratios_st},
                {"ratios_ns", cfg.sweep.ratios_ns},
                {"betas", cfg.sweep.betas},
                {"with_coral", cfg.sweep.with_coral},
                {"coral_gamma", cfg.sweep.coral_gamma}};
  j["tsne"] = {{"checkpoint", cfg.tsne.checkpoint},
               {"per_group", cfg.tsne.per_group},
               {"perplexity", cfg.tsne.perplexity},
               {"iterations", cfg.tsne.iterations}};
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const ordered_json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig cfg;
  Section root(j, "config");
  if (!root.read("version", cfg.version)) throw ConfigError("config.version is required");
  if (cfg.version != kConfigVersion)
    throw ConfigError("config.version " + std::to_string(cfg.version) + " is not supported (expected " +
                      std::to_string(kConfigVersion) + ")");
  root.read("command", cfg.command);
  if (!root.read("seed", cfg.seed)) cfg.seed = env_seed();
  root.read("out", cfg.out);
  root.read("data_dir", cfg.data_dir);
  root.read("seeds", cfg.seeds);
  root.read("n_seeds", cfg.n_seeds);

  auto& d = cfg.dataset;
  Section ds = root.child("dataset");
  if (!ds.read("master_seed", d.master_seed)) d.master_seed = cfg.seed;
  ds.read("image_size", d.image_size);
  ds.read("n_source_smoke", d.n_source_smoke);
  ds.read("n_target_smoke", d.n_target_smoke);
  ds.read("n_nonsmoke_per_dataset", d.n_nonsmoke_per_dataset);
  ds.read("nonsmoke_to_smoke_ratio", d.nonsmoke_to_smoke_ratio);
  ds.read("gap_strength", d.gap_strength);
  ds.read("n_test_smoke", d.n_test_smoke);
  ds.read("n_test_nonsmoke", d.n_test_nonsmoke);
  ds.read("target_diversity", d.target_diversity);
  ds.read("hard_negative_fraction", d.hard_negative_fraction);
  ds.read("test_hard_negative_fraction", d.test_hard_negative_fraction);
  ds.read("render_scale", d.render_scale);
  ds.read("crop_margin", d.crop_margin);
  ds.read("augment_factor", d.augment_factor);
  ds.finish();

  auto& t = cfg.train;
  Section tr = root.child("train");
  std::string name;
  if (tr.read("variant", name)) t.variant.variant = parse_variant(name);
  if (!tr.read("seed", t.seed)) t.seed = cfg.seed;
  tr.read("batch_size", t.batch_size);
  tr.read("epochs", t.epochs);
  tr.read("lr", t.lr);
  tr.read("momentum", t.momentum);
  tr.read("lr_decay", t.lr_decay);
  tr.read("feature_dim", t.variant.feature_dim);
  tr.read("adapt_dim", t.variant.adapt_dim);
  if (tr.read("coral_pairing", name)) t.coral_pairing = parse_coral_pairing(name);
  tr.read("phi_ramp_epochs", t.phi_ramp_epochs);
  tr.read("eval_each_epoch", t.eval_each_epoch);
  Section wt = tr.child("weights");
  wt.read("alpha", t.weights.alpha_label);
  wt.read("beta", t.weights.beta_domain);
  wt.read("gamma", t.weights.gamma_coral);
  wt.read("phi", t.weights.phi);
  wt.read("p", t.weights.p);
  wt.read("unit_sum", t.weights.unit_sum);
  wt.finish();
  tr.finish();

  Section sw = root.child("sweep");
  sw.read("which", cfg.sweep.which);
  sw.read("ratios_st", cfg.sweep.ratios_st);
  sw.read("ratios_ns", cfg.sweep.ratios_ns);
  sw.read("betas", cfg.sweep.betas);
  sw.read("with_coral", cfg.sweep.with_coral);
  sw.read("coral_gamma", cfg.sweep.coral_gamma);
  sw.finish();

  Section ts = root.child("tsne");
  ts.read("checkpoint", cfg.tsne.checkpoint);
  ts.read("per_group", cfg.tsne.per_group);
  ts.read("perplexity", cfg.tsne.perplexity);
  ts.read("iterations", cfg.tsne.iterations);
  ts.finish();

  root.finish();
  return cfg;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Domain adaptation experiments for smoke classification", "smokeda"};
  app.require_subcommand(1, 1);

  std::string config_path, out_dir, data_dir, which, checkpoint;
  std::uint64_t seed = 0;
  int jobs = 1;
  struct Flags {
    CLI::Option *seed, *out, *data, *which, *checkpoint;
  };
  std::map<std::string, Flags> flags;
  for (const char* name : {"synth", "train", "ablation", "sweep", "tsne"}) {
    CLI::App* sub = app.add_subcommand(name);
    Flags f{};
    sub->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    f.seed = sub->add_option("--seed", seed, "global seed, overrides the config and SMOKEDA_SEED");
    sub->add_option("--jobs", jobs, "parallel training runs")->check(CLI::PositiveNumber);
    f.out = sub->add_option("--out", out_dir, "output directory");
    f.data = nullptr;
    f.which = nullptr;
    f.checkpoint = nullptr;
    if (std::string(name) != "synth") f.data = sub->add_option("--data", data_dir, "corpus written by synth");
    if (std::string(name) == "sweep")
      f.which = sub->add_option("--which", which, "ratio_st, ratio_ns or beta")
                    ->check(CLI::IsMember({"ratio_st", "ratio_ns", "beta"}));
    if (std::string(name) == "tsne") f.checkpoint = sub->add_option("--checkpoint", checkpoint, "trained model");
    flags[name] = f;
  }

  std::vector<std::string> argv_store{"smokeda"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const Flags& f = flags.at(command);
  try {
    ExperimentConfig cfg = parse_config(config_path.empty() ? R"({"version": 1})" : read_file(config_path));
    cfg.command = command;
    if (f.seed->count() > 0) {
      cfg.seed = seed;
      cfg.train.seed = seed;
      cfg.dataset.master_seed = seed;
      cfg.seeds.clear();
    }
    if (f.out->count() > 0) cfg.out = out_dir;
    if (f.data != nullptr && f.data->count() > 0) cfg.data_dir = data_dir;
    if (f.which != nullptr && f.which->count() > 0) cfg.sweep.which = which;
    if (f.checkpoint != nullptr && f.checkpoint->count() > 0) cfg.tsne.checkpoint = checkpoint;
    finalize(cfg);

    std::error_code ec;
    fs::create_directories(cfg.out, ec);
    if (ec) throw IoError("cannot create " + cfg.out + ": " + ec.message());
    write_file_atomic(fs::path(cfg.out) / "config.resolved", config_to_text(cfg));

    if (command == "synth") cmd_synth(cfg, out);
    else if (command == "train") cmd_train(cfg, out);
    else if (command == "ablation") cmd_ablation(cfg, jobs, out);
    else if (command == "sweep") cmd_sweep(cfg, jobs, out);
    else cmd_tsne(cfg, out);
    out << "outputs in " << cfg.out << "\n";
    return 0;
  } catch (const std::exception& e) {
    err << "smokeda " << command << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace smokeda
