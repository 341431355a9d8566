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

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "smokeda/cli.hpp"
#include "smokeda/errors.hpp"
#include "smokeda/files.hpp"

using namespace smokeda;
namespace fs = std::filesystem;

namespace {

const char* kSmall = R"({"version": 1,
 "dataset": {"image_size": 16, "n_source_smoke": 24, "n_target_smoke": 12, "n_test_smoke": 10, "n_test_nonsmoke": 10},
 "train": {"epochs": 2, "batch_size": 8, "feature_dim": 8, "adapt_dim": 4},
 "tsne": {"per_group": 12, "perplexity": 5, "iterations": 150},
 "n_seeds": 2,
 "sweep": {"betas": [0.2, 0.6], "ratios_st": [1, 2], "ratios_ns": [1]}})";

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("smokeda_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
    write_file_atomic(root / "small.json", kSmall);
  }
  ~Workspace() { fs::remove_all(root); }
  std::string path(const std::string& rel) const { return (root / rel).string(); }

  int run(std::vector<std::string> args) {
    out.str("");
    err.str("");
    return run_cli(args, out, err);
  }
  std::ostringstream out, err;
};

std::size_t lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("config round trips through its text form") {
  ExperimentConfig cfg = parse_config(kSmall);
  cfg.seeds = {3, 4};
  cfg.train.weights.beta_domain = 0.1 + 0.2;
  const ExperimentConfig back = parse_config(config_to_text(cfg));
  CHECK(config_to_text(back) == config_to_text(cfg));
  CHECK(back.train.weights.beta_domain == cfg.train.weights.beta_domain);
  CHECK(back.dataset.image_size == 16);
}

TEST_CASE("config errors name the problem") {
  CHECK_THROWS_AS(parse_config("{}"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"version": 7})"), doctest::Contains("expected 1"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"version": 1, "train": {"epoch": 3}})"),
                       doctest::Contains("config.train.epoch"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "train": {"epochs": 2.5}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "seed": -1})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"version": 1, "train": {"variant": "alexnet"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
}

TEST_CASE("seed precedence is flag over file over environment") {
  ::setenv("SMOKEDA_SEED", "17", 1);
  CHECK(parse_config(R"({"version": 1})").train.seed == 17);
  CHECK(parse_config(R"({"version": 1})").dataset.master_seed == 17);
  CHECK(parse_config(R"({"version": 1, "seed": 5})").train.seed == 5);
  CHECK(parse_config(R"({"version": 1, "seed": 5, "train": {"seed": 9}})").train.seed == 9);
  ::unsetenv("SMOKEDA_SEED");
  CHECK(parse_config(R"({"version": 1})").train.seed == 1);

  Workspace ws("seed");
  ::setenv("SMOKEDA_SEED", "17", 1);
  REQUIRE(ws.run({"synth", "--config", ws.path("small.json"), "--out", ws.path("a")}) == 0);
  CHECK(parse_config(read_file(ws.path("a/config.resolved"))).dataset.master_seed == 17);
  REQUIRE(ws.run({"synth", "--config", ws.path("small.json"), "--out", ws.path("b"), "--seed", "4"}) == 0);
  CHECK(parse_config(read_file(ws.path("b/config.resolved"))).dataset.master_seed == 4);
  ::unsetenv("SMOKEDA_SEED");
}

TEST_CASE("synth writes a reproducible corpus") {
  Workspace ws("synth");
  REQUIRE(ws.run({"synth", "--config", ws.path("small.json"), "--out", ws.path("x/y")}) == 0);
  CHECK(ws.out.str().find("total 92 rows") != std::string::npos);
  const std::string manifest = read_file(ws.path("x/y/manifest.jsonl"));
  CHECK(lines(manifest) == 92);
  REQUIRE(ws.run({"synth", "--config", ws.path("x/y/config.resolved"), "--out", ws.path("z")}) == 0);
  CHECK(read_file(ws.path("z/manifest.jsonl")) == manifest);
  for (const auto& entry : fs::recursive_directory_iterator(ws.path("x/y"))) {
    if (!entry.is_regular_file() || entry.path().extension() != ".png") continue;
    const auto rel = fs::relative(entry.path(), ws.path("x/y"));
    CHECK(read_file(entry.path()) == read_file(ws.root / "z" / rel));
  }
}

TEST_CASE("unwritable output and bad flags fail with nonzero status") {
  Workspace ws("fail");
  write_file_atomic(ws.root / "file", "x");
  CHECK(ws.run({"synth", "--config", ws.path("small.json"), "--out", ws.path("file/sub")}) == 1);
  CHECK(!ws.err.str().empty());
  CHECK(ws.run({"train", "--config", ws.path("missing.json")}) != 0);
  CHECK(ws.run({"sweep", "--which", "gamma"}) != 0);
  CHECK(ws.run({}) != 0);
}

TEST_CASE("train is deterministic and reports every loss column") {
  Workspace ws("train");
  REQUIRE(ws.run({"synth", "--config", ws.path("small.json"), "--out", ws.path("data")}) == 0);
  REQUIRE(ws.run({"train", "--config", ws.path("small.json"), "--data", ws.path("data"), "--out", ws.path("a")}) == 0);
  REQUIRE(ws.run({"train", "--config", ws.path("a/config.resolved"), "--out", ws.path("b")}) == 0);
  for (const char* f : {"losses.csv", "metrics.csv", "checkpoint.bin"})
    CHECK(read_file(ws.path(std::string("a/") + f)) == read_file(ws.path(std::string("b/") + f)));
  const std::string losses = read_file(ws.path("a/losses.csv"));
  CHECK(losses.rfind("step,L_s,L_d,L_coral,L_joint\n", 0) == 0);
  CHECK(lines(losses) > 1);
  CHECK(lines(read_file(ws.path("a/metrics.csv"))) == 2);

  // An in-memory corpus from the same settings trains identically.
  REQUIRE(ws.run({"train", "--config", ws.path("small.json"), "--out", ws.path("c")}) == 0);
  CHECK(read_file(ws.path("c/losses.csv")) == losses);

  write_file_atomic(ws.root / "grl.json", std::string(kSmall).replace(std::string(kSmall).find("\"epochs\""), 0,
                                                                       "\"variant\": \"grl_only\", "));
  REQUIRE(ws.run({"train", "--config", ws.path("grl.json"), "--out", ws.path("g")}) == 0);
  std::istringstream rows(read_file(ws.path("g/losses.csv")));
  std::string line;
  std::getline(rows, line);
  while (std::getline(rows, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    REQUIRE(cells.size() == 5);
    CHECK(cells[3] == "0");
  }
}

TEST_CASE("sweep and ablation tables") {
  Workspace ws("sweep");
  REQUIRE(ws.run({"sweep", "--config", ws.path("small.json"), "--out", ws.path("b"), "--which", "beta"}) == 0);
  const std::string csv = read_file(ws.path("b/sweep_beta.csv"));
  CHECK(lines(csv) == 1 + 2 * 2 * 2);
  const std::string svg = read_file(ws.path("b/sweep_beta.svg"));
  std::size_t curves = 0;
  for (auto pos = svg.find("<polyline"); pos != std::string::npos; pos = svg.find("<polyline", pos + 1)) ++curves;
  CHECK(curves == 2);
  REQUIRE(ws.run({"sweep", "--config", ws.path("b/config.resolved"), "--out", ws.path("b2")}) == 0);
  CHECK(read_file(ws.path("b2/sweep_beta.svg")) == svg);

  REQUIRE(ws.run({"sweep", "--config", ws.path("small.json"), "--out", ws.path("r"), "--which", "ratio_st"}) == 0);
  CHECK(lines(read_file(ws.path("r/sweep_ratio_st.csv"))) == 1 + 2 * 2);

  REQUIRE(ws.run({"ablation", "--config", ws.path("small.json"), "--out", ws.path("a"), "--jobs", "2"}) == 0);
  CHECK(lines(read_file(ws.path("a/ablation.csv"))) == 1 + 5 * 2 + 5);
}

TEST_CASE("tsne exports one row per sampled point") {
  Workspace ws("tsne");
  REQUIRE(ws.run({"train", "--config", ws.path("small.json"), "--out", ws.path("t")}) == 0);
  REQUIRE(ws.run({"tsne", "--config", ws.path("small.json"), "--out", ws.path("t")}) == 0);
  const std::string csv = read_file(ws.path("t/embedding.csv"));
  CHECK(lines(csv) == 1 + 36);
  const std::string svg = read_file(ws.path("t/tsne.svg"));
  for (const char* group : {"synthetic smoke", "real smoke", "non-smoke"}) CHECK(svg.find(group) != std::string::npos);
  REQUIRE(ws.run({"tsne", "--config", ws.path("small.json"), "--out", ws.path("t2"), "--checkpoint",
                  ws.path("t/checkpoint.bin")}) == 0);
  CHECK(read_file(ws.path("t2/embedding.csv")) == csv);

  write_file_atomic(ws.root / "junk.bin", "not a checkpoint");
  CHECK(ws.run({"tsne", "--config", ws.path("small.json"), "--out", ws.path("t3"), "--checkpoint",
                ws.path("junk.bin")}) == 1);
}
