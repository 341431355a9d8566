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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smokeda/rng.hpp"
#include "smokeda/tensor.hpp"

namespace smokeda {

/// Randomized plume description: initial flow, wind, lighting and
/// background. Identical parameters render identical images.
struct PlumeParams {
  std::uint64_t seed = 0;
  double source_width = 0.2;   // fraction of image width at the source
  double buoyancy = 1.0;       // vertical advection rate, [0.5, 1.5]
  double wind = 0.0;           // horizontal shear, [-1, 1]
  double density = 0.8;        // (0, 1]
  double lighting_gain = 1.0;  // [0.6, 1.4]
  int octaves = 4;             // fractal noise depth, [2, 6]
  int background_id = 0;       // [0, kBackgroundCount)

  static constexpr int kBackgroundCount = 6;

  void validate() const;
  /// Draws every field from its full range. `diversity` in (0, 1] shrinks
  /// each range around its centre and limits the background ids.
  static PlumeParams sample(std::uint64_t seed, double diversity = 1.0);
};

/// Binary mask, row-major, one byte per pixel.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  double coverage() const;
  bool empty() const;
};

/// Inclusive pixel rectangle.
struct BBox {
  int row0 = 0, col0 = 0, row1 = 0, col1 = 0;
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct SmokeRender {
  Tensor image;        // [3 x size x size], values in [0, 1] on the 8-bit grid
  Mask mask;           // plume alpha > kMaskThreshold
  PlumeParams params;  // parameters actually used (seed may be perturbed)
};

inline constexpr double kMaskThreshold = 0.05;
inline constexpr double kMinCoverage = 0.05;
inline constexpr double kMaxCoverage = 0.6;
inline constexpr int kMaxGenerationAttempts = 10;

/// Synthetic-domain smoke: fractal plume advected upward and sheared by
/// wind, composited over a procedurally tiled background, scaled by the
/// lighting gain. Regenerates with a perturbed seed (up to 10 attempts) until
/// mask coverage lies in [0.05, 0.6]; throws GenerationError otherwise.
SmokeRender gen_smoke_synthetic(const PlumeParams& params, int size);

/// Real-domain stand-in: the same plume skeleton with a rougher noise
/// spectrum, photographic backgrounds, blur and sensor grain, each scaled by
/// gap_strength. gap_strength = 0 reproduces gen_smoke_synthetic exactly.
SmokeRender gen_smoke_realproxy(const PlumeParams& params, int size, double gap_strength);

/// Background-only real scene. Hard negatives overlay cloud or fog texture
/// without plume structure.
Tensor gen_nonsmoke(std::uint64_t seed, int size, bool hard_negative);

/// Tight bounding box of the mask grown by `margin` and clamped to the
/// image, and the crop rescaled to out_size x out_size. Throws
/// EmptyRegionError for an empty mask.
struct Region {
  Tensor image;
  BBox bbox;
};
BBox mask_bbox(const Mask& mask, int margin);
Region extract_region(const Tensor& image, const Mask& mask, int margin, int out_size);

/// Bilinear resample of the inclusive rectangle to out_size x out_size.
Tensor crop_resize(const Tensor& image, const BBox& box, int out_size);
Tensor hflip(const Tensor& image);
/// Rounds every value to the nearest multiple of 1/255 in [0, 1].
void quantize_8bit(Tensor& image);

/// Slope of the log-log radially averaged power spectrum of the luminance.
double spectral_slope(const Tensor& image);
/// Mean power over spatial frequencies of radius 1..3 (DC excluded).
double low_frequency_energy(const Tensor& image);

// ---------------------------------------------------------------------------
// Corpora
// ---------------------------------------------------------------------------

enum class Split { kSource, kTarget, kTest };
std::string_view split_name(Split s);
Split parse_split(std::string_view name);

struct DatasetSpec {
  int n_source_smoke = 1000;
  int n_target_smoke = 500;
  /// Non-smoke rows per dataset; negative means round(ratio * smoke count).
  int n_nonsmoke_per_dataset = -1;
  double nonsmoke_to_smoke_ratio = 1.0;
  int image_size = 32;
  std::uint64_t master_seed = 1;
  double gap_strength = 1.0;

  int n_test_smoke = 500;
  int n_test_nonsmoke = 500;
  /// Real smoke in the target split covers only this fraction of the plume
  /// parameter space; test smoke covers all of it.
  double target_diversity = 0.35;
  double hard_negative_fraction = 0.25;
  double test_hard_negative_fraction = 0.5;
  /// Scenes are rendered at render_scale * image_size before cropping.
  int render_scale = 2;
  int crop_margin = 2;
  /// Copies per target smoke row after augmentation (1 = none).
  int augment_factor = 1;

  void validate() const;
  int nonsmoke_count(int smoke_count) const;
};

struct LabeledSample {
  Tensor image;  // [3 x image_size x image_size]
  int y_s = 0;   // 1 = smoke
  int y_d = 1;   // 0 = synthetic, 1 = real
  Split split = Split::kSource;
  std::optional<BBox> mask_bbox;
  std::uint64_t seed = 0;
  std::string path;  // relative path in the image store
};

/// One manifest record; field order on disk is path, y_s, y_d, split, bbox.
struct ManifestRow {
  std::string path;
  int y_s = 0;
  int y_d = 1;
  Split split = Split::kSource;
  std::optional<BBox> bbox;
  friend bool operator==(const ManifestRow&, const ManifestRow&) = default;
};

struct Corpus {
  DatasetSpec spec;
  std::vector<LabeledSample> samples;

  std::vector<std::size_t> indices(Split split) const;
  std::vector<ManifestRow> manifest() const;
};

/// Stacks the images of the given rows into [N x C x H x W].
Tensor stack_images(const Corpus& corpus, std::span<const std::size_t> rows);

/// Relative store path `<split>/<domain>/<label>/<seed>.png`.
std::string sample_path(Split split, int y_d, int y_s, std::uint64_t seed,
                        const std::string& suffix = "");

/// Generates every split in memory. Training seeds are even and test seeds
/// odd, so the two never collide.
Corpus build_dataset(const DatasetSpec& spec);

/// Adds factor - 1 jittered copies (flip, crop of at most 10% per side,
/// brightness within 10%) of every target smoke row. Labels are preserved.
Corpus augment_target(const Corpus& corpus, int factor, Rng& rng);

/// Writes PNGs and manifest.jsonl under dir.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);
/// Reads manifest.jsonl and the images it names.
Corpus load_corpus(const std::filesystem::path& dir, const DatasetSpec& spec);

std::string manifest_line(const ManifestRow& row);
ManifestRow parse_manifest_line(const std::string& line);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& file);

/// Checks the composition rule: synthetic rows are smoke, bbox iff smoke,
/// domains match the split. Returns the number of violating rows.
std::size_t count_label_violations(const std::vector<ManifestRow>& rows);

}  // namespace smokeda
