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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "smokeda/errors.hpp"
#include "smokeda/synth.hpp"

using namespace smokeda;

namespace {

struct Stats {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
};

Stats stats(const std::vector<double>& xs) {
  Stats s;
  s.n = xs.size();
  for (double x : xs) s.mean += x / static_cast<double>(s.n);
  for (double x : xs) s.var += (x - s.mean) * (x - s.mean) / static_cast<double>(s.n - 1);
  return s;
}

double separation(const Stats& a, const Stats& b) {
  const double se = std::sqrt(a.var / static_cast<double>(a.n) + b.var / static_cast<double>(b.n));
  return std::abs(a.mean - b.mean) / se;
}

std::vector<double> slopes(double gap, int count) {
  std::vector<double> out;
  for (int i = 0; i < count; ++i) {
    const auto p = PlumeParams::sample(static_cast<std::uint64_t>(500 + i));
    const auto r = gap < 0 ? gen_smoke_synthetic(p, 64) : gen_smoke_realproxy(p, 64, gap);
    out.push_back(spectral_slope(r.image));
  }
  return out;
}

Mask make_mask(int h, int w, std::initializer_list<std::pair<int, int>> on) {
  Mask m{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (auto [r, c] : on) m.bits[static_cast<std::size_t>(r) * w + c] = 1;
  return m;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

DatasetSpec small_spec() {
  DatasetSpec spec;
  spec.n_source_smoke = 100;
  spec.n_target_smoke = 100;
  spec.nonsmoke_to_smoke_ratio = 1.0;
  spec.n_test_smoke = 20;
  spec.n_test_nonsmoke = 20;
  spec.master_seed = 11;
  return spec;
}

}  // namespace

TEST_CASE("smoke generators are deterministic") {
  const auto p = PlumeParams::sample(42);
  const auto a = gen_smoke_synthetic(p, 64), b = gen_smoke_synthetic(p, 64);
  CHECK(a.image == b.image);
  CHECK(a.mask.bits == b.mask.bits);
  const auto c = gen_smoke_realproxy(p, 64, 0.7), d = gen_smoke_realproxy(p, 64, 0.7);
  CHECK(c.image == d.image);
  CHECK(gen_nonsmoke(9, 64, true) == gen_nonsmoke(9, 64, true));
  CHECK(gen_nonsmoke(9, 64, false) == gen_nonsmoke(9, 64, false));
}

TEST_CASE("outputs are 8-bit quantized and in range") {
  const auto r = gen_smoke_realproxy(PlumeParams::sample(3), 32, 1.0);
  for (double v : r.image.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    CHECK(std::round(v * 255.0) / 255.0 == v);
  }
}

TEST_CASE("vanishing density exhausts regeneration") {
  auto p = PlumeParams::sample(5);
  p.density = 1e-6;
  CHECK_THROWS_AS(gen_smoke_synthetic(p, 64), GenerationError);
  try {
    gen_smoke_synthetic(p, 64);
  } catch (const GenerationError& e) {
    CHECK(std::string(e.what()).find("density=") != std::string::npos);
  }
  CHECK_THROWS_AS(gen_smoke_synthetic(PlumeParams::sample(5), 8), ContractError);
}

TEST_CASE("mask coverage stays inside the band") {
  std::vector<double> cov;
  for (int i = 0; i < 100; ++i) {
    const auto r = gen_smoke_synthetic(PlumeParams::sample(static_cast<std::uint64_t>(i)), 64);
    CHECK(r.mask.coverage() >= kMinCoverage);
    CHECK(r.mask.coverage() <= kMaxCoverage);
    cov.push_back(r.mask.coverage());
  }
  const double mean = stats(cov).mean;
  CHECK(mean >= 0.05);
  CHECK(mean <= 0.6);
}

TEST_CASE("zero gap reproduces the synthetic generator") {
  for (int i = 0; i < 10; ++i) {
    const auto p = PlumeParams::sample(static_cast<std::uint64_t>(70 + i));
    CHECK(gen_smoke_realproxy(p, 64, 0.0).image == gen_smoke_synthetic(p, 64).image);
  }
  const Stats syn = stats(slopes(-1, 100)), gap0 = stats(slopes(0.0, 100));
  CHECK(gap0.mean == syn.mean);
  CHECK(gap0.var == syn.var);
}

TEST_CASE("spectral slope separates the domains and grows with the gap") {
  const Stats syn = stats(slopes(-1, 100));
  double last = 0.0;
  for (double gap : {0.25, 0.5, 0.75, 1.0}) {
    const double sep = separation(syn, stats(slopes(gap, 100)));
    MESSAGE("gap " << gap << " separation " << sep);
    CHECK(sep >= last);
    last = sep;
  }
  CHECK(last > 3.0);
}

TEST_CASE("hard negatives carry more low-frequency energy") {
  std::vector<double> plain, hard;
  for (int i = 0; i < 100; ++i) {
    plain.push_back(low_frequency_energy(gen_nonsmoke(static_cast<std::uint64_t>(i), 64, false)));
    hard.push_back(low_frequency_energy(gen_nonsmoke(static_cast<std::uint64_t>(i), 64, true)));
  }
  const Stats p = stats(plain), h = stats(hard);
  MESSAGE("plain " << p.mean << " hard " << h.mean);
  CHECK(h.mean > p.mean);
}

TEST_CASE("region extraction") {
  const Mask m = make_mask(16, 12, {{2, 3}, {10, 8}});
  CHECK(mask_bbox(m, 0) == BBox{2, 3, 10, 8});
  CHECK(mask_bbox(m, 1) == BBox{1, 2, 11, 9});
  CHECK(mask_bbox(m, 100) == BBox{0, 0, 15, 11});

  Mask full{16, 12, std::vector<std::uint8_t>(16 * 12, 1)};
  CHECK(mask_bbox(full, 0) == BBox{0, 0, 15, 11});

  const Tensor img({3, 16, 12}, 0.5);
  const Region r = extract_region(img, m, 0, 8);
  CHECK(r.image.shape() == Shape{3, 8, 8});
  CHECK(r.bbox == BBox{2, 3, 10, 8});
  for (double v : r.image.data()) CHECK(v == doctest::Approx(0.5));

  CHECK_THROWS_AS(extract_region(img, make_mask(16, 12, {}), 0, 8), EmptyRegionError);
  CHECK_THROWS_AS(extract_region(img, make_mask(8, 8, {{1, 1}}), 0, 8), DimensionError);
}

TEST_CASE("crop_resize of the full box at the same size is the identity") {
  Rng rng(4);
  Tensor img({3, 10, 10});
  for (auto& v : img.data()) v = rng.uniform();
  const Tensor out = crop_resize(img, {0, 0, 9, 9}, 10);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == doctest::Approx(img[i]).epsilon(1e-12));
}

TEST_CASE("hflip is an involution") {
  Rng rng(8);
  Tensor img({3, 5, 7});
  for (auto& v : img.data()) v = rng.uniform();
  CHECK(hflip(hflip(img)) == img);
  CHECK(hflip(img)[6] == img[0]);
}

TEST_CASE("dataset composition, disjointness and determinism") {
  const DatasetSpec spec = small_spec();
  const Corpus c = build_dataset(spec);
  const auto rows = c.manifest();
  int src_smoke = 0, tgt_smoke = 0, nonsmoke = 0, test = 0;
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& s : c.samples) {
    CHECK(s.image.shape() == Shape{3, 32, 32});
    if (s.split == Split::kTest) {
      ++test;
      test_seeds.insert(s.seed);
      continue;
    }
    train_seeds.insert(s.seed);
    if (s.y_s == 0) ++nonsmoke;
    else if (s.split == Split::kSource) ++src_smoke;
    else ++tgt_smoke;
    if (s.y_s == 0) CHECK(s.y_d == 1);
  }
  CHECK(src_smoke == 100);
  CHECK(tgt_smoke == 100);
  CHECK(nonsmoke == 200);
  CHECK(test == 40);
  CHECK(count_label_violations(rows) == 0);
  for (auto s : test_seeds) CHECK(train_seeds.count(s) == 0);

  const Corpus again = build_dataset(spec);
  REQUIRE(again.samples.size() == c.samples.size());
  CHECK(again.manifest() == rows);
  for (std::size_t i = 0; i < c.samples.size(); ++i) CHECK(again.samples[i].image == c.samples[i].image);
}

TEST_CASE("label violations are counted") {
  std::vector<ManifestRow> rows = {
      {"a.png", 1, 0, Split::kSource, BBox{0, 0, 1, 1}},
      {"b.png", 0, 0, Split::kSource, std::nullopt},       // synthetic non-smoke
      {"c.png", 1, 1, Split::kTarget, std::nullopt},       // smoke without bbox
      {"d.png", 0, 1, Split::kTest, BBox{0, 0, 1, 1}},     // non-smoke with bbox
      {"e.png", 1, 0, Split::kTest, BBox{0, 0, 1, 1}},     // synthetic test row
  };
  CHECK(count_label_violations(rows) == 4);
}

TEST_CASE("corpus written to disk is byte-reproducible and reloads losslessly") {
  DatasetSpec spec = small_spec();
  spec.n_source_smoke = 6;
  spec.n_target_smoke = 4;
  spec.n_test_smoke = 3;
  spec.n_test_nonsmoke = 3;
  const auto base = std::filesystem::temp_directory_path() / "smokeda_test_synth";
  std::filesystem::remove_all(base);
  const Corpus c = build_dataset(spec);
  write_corpus(c, base / "a");
  write_corpus(build_dataset(spec), base / "b");
  CHECK(slurp(base / "a" / "manifest.jsonl") == slurp(base / "b" / "manifest.jsonl"));
  for (const auto& s : c.samples) CHECK(slurp(base / "a" / s.path) == slurp(base / "b" / s.path));

  const auto first = read_manifest(base / "a" / "manifest.jsonl").front();
  CHECK(manifest_line(first).rfind(R"({"path":")", 0) == 0);

  const Corpus back = load_corpus(base / "a", spec);
  REQUIRE(back.samples.size() == c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    CHECK(back.samples[i].image == c.samples[i].image);
    CHECK(back.samples[i].seed == c.samples[i].seed);
  }
  CHECK(back.manifest() == c.manifest());
  std::filesystem::remove_all(base);
}

TEST_CASE("manifest line round-trip") {
  const ManifestRow row{"source/synthetic/smoke/12.png", 1, 0, Split::kSource, BBox{1, 2, 30, 40}};
  CHECK(manifest_line(row) ==
        R"({"path":"source/synthetic/smoke/12.png","y_s":1,"y_d":0,"split":"source","bbox":[1,2,30,40]})");
  CHECK(parse_manifest_line(manifest_line(row)) == row);
  CHECK_THROWS_AS(parse_manifest_line("{\"path\": 3}"), IoError);
}

TEST_CASE("target augmentation") {
  DatasetSpec spec = small_spec();
  spec.n_source_smoke = 4;
  spec.n_target_smoke = 100;
  spec.nonsmoke_to_smoke_ratio = 0.1;
  spec.n_test_smoke = 0;
  spec.n_test_nonsmoke = 0;
  const Corpus c = build_dataset(spec);
  Rng rng(1);
  const Corpus same = augment_target(c, 1, rng);
  CHECK(same.manifest() == c.manifest());

  const Corpus big = augment_target(c, 4, rng);
  int tgt_smoke = 0, other = 0;
  for (const auto& s : big.samples) {
    if (s.split == Split::kTarget && s.y_s == 1) {
      ++tgt_smoke;
      CHECK(s.y_d == 1);
      CHECK(s.seed % 2 == 0);
    } else {
      ++other;
    }
  }
  CHECK(tgt_smoke == 400);
  CHECK(other == static_cast<int>(c.samples.size()) - 100);
  CHECK(count_label_violations(big.manifest()) == 0);
  CHECK_THROWS_AS(augment_target(c, 0, rng), ContractError);
}

TEST_CASE("parameter sampling respects ranges and diversity") {
  for (int i = 0; i < 200; ++i) {
    const auto p = PlumeParams::sample(static_cast<std::uint64_t>(i));
    CHECK_NOTHROW(p.validate());
    const auto q = PlumeParams::sample(static_cast<std::uint64_t>(i), 0.35);
    CHECK_NOTHROW(q.validate());
    CHECK(std::abs(q.wind) <= 0.35 + 1e-12);
    CHECK(std::abs(q.source_width - 0.2) <= 0.12 * 0.35 + 1e-12);
  }
  PlumeParams bad;
  bad.lighting_gain = 2.0;
  CHECK_THROWS_AS(bad.validate(), ContractError);
}
