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

#include "smokeda/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "smokeda/errors.hpp"
#include "smokeda/files.hpp"
#include "smokeda/image_io.hpp"

namespace smokeda {

namespace {

constexpr double kPi = std::numbers::pi;

// Rendering constants of the real-capture stand-in at gap_strength = 1.
constexpr double kRealPersistenceShift = 0.22;
constexpr double kRealBlurSigma = 0.6;  // render pixels
constexpr double kRealGrainSigma = 0.035;
constexpr double kRealToneShift = 1.0;  // fraction of the way to dark smoke

constexpr std::uint64_t kTagPlume = hash_tag("plume");
constexpr std::uint64_t kTagShade = hash_tag("shade");
constexpr std::uint64_t kTagBackground = hash_tag("background");
constexpr std::uint64_t kTagGrain = hash_tag("grain");
constexpr std::uint64_t kTagFog = hash_tag("fog");

struct Rgb {
  double r, g, b;
};

Rgb operator*(Rgb c, double s) { return {c.r * s, c.g * s, c.b * s}; }
Rgb operator+(Rgb a, Rgb b) { return {a.r + b.r, a.g + b.g, a.b + b.b}; }
Rgb mix(Rgb a, Rgb b, double t) { return a * (1.0 - t) + b * t; }

Rgb jitter(Rng& rng, Rgb c, double amount) {
  return {std::clamp(c.r + rng.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c.g + rng.uniform(-amount, amount), 0.0, 1.0),
          std::clamp(c.b + rng.uniform(-amount, amount), 0.0, 1.0)};
}

Rgb random_color(Rng& rng, double lo, double hi) {
  return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

class Canvas {
 public:
  explicit Canvas(int size) : size_(size), t_({3, static_cast<std::size_t>(size),
                                               static_cast<std::size_t>(size)}) {}

  int size() const { return size_; }
  void set(int row, int col, Rgb c) {
    const std::size_t plane = static_cast<std::size_t>(size_) * size_;
    const std::size_t at = static_cast<std::size_t>(row) * size_ + col;
    t_[at] = c.r;
    t_[plane + at] = c.g;
    t_[2 * plane + at] = c.b;
  }
  Rgb get(int row, int col) const {
    const std::size_t plane = static_cast<std::size_t>(size_) * size_;
    const std::size_t at = static_cast<std::size_t>(row) * size_ + col;
    return {t_[at], t_[plane + at], t_[2 * plane + at]};
  }
  Tensor& tensor() { return t_; }

 private:
  int size_;
  Tensor t_;
};

// Lattice value noise with quintic interpolation.
double lattice(std::uint64_t seed, long ix, long iy) {
  const std::uint64_t h = mix_seed(seed ^ (static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ULL) ^
                                   (static_cast<std::uint64_t>(iy) * 0xc2b2ae3d27d4eb4fULL));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

double fade(double t) { return t * t * t * (t * (t * 6.0 - 15.0) + 10.0); }

double value_noise(std::uint64_t seed, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const long ix = static_cast<long>(fx), iy = static_cast<long>(fy);
  const double tx = fade(x - fx), ty = fade(y - fy);
  const double a = lattice(seed, ix, iy), b = lattice(seed, ix + 1, iy);
  const double c = lattice(seed, ix, iy + 1), d = lattice(seed, ix + 1, iy + 1);
  return (a + (b - a) * tx) * (1.0 - ty) + (c + (d - c) * tx) * ty;
}

/// Fractal sum normalized to [0, 1]. Higher persistence keeps more energy in
/// the fine octaves, flattening the spectrum.
double fbm(std::uint64_t seed, double x, double y, int octaves, double persistence) {
  double sum = 0.0, norm = 0.0, amp = 1.0, freq = 1.0;
  for (int o = 0; o < octaves; ++o) {
    sum += amp * value_noise(seed + static_cast<std::uint64_t>(o) * 0x51ed27ULL, x * freq, y * freq);
    norm += amp;
    amp *= persistence;
    freq *= 2.0;
  }
  return sum / norm;
}

// --- backgrounds -----------------------------------------------------------

Tensor tiled_background(int id, std::uint64_t seed, int size) {
  Rng rng(derive_seed(seed, {kTagBackground, 1}));
  const Rgb c1 = random_color(rng, 0.15, 0.85);
  Rgb c2 = random_color(rng, 0.15, 0.85);
  const Rgb c3 = random_color(rng, 0.15, 0.85);
  if (std::abs(c1.r + c1.g + c1.b - c2.r - c2.g - c2.b) < 0.3) c2 = c2 * 0.5;
  const double period = rng.uniform(6.0, 14.0) * size / 64.0;
  const double phase_x = rng.uniform(0.0, period), phase_y = rng.uniform(0.0, period);
  Canvas cv(size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double x = c + phase_x, y = r + phase_y;
      const long tx = static_cast<long>(std::floor(x / period));
      const long ty = static_cast<long>(std::floor(y / period));
      Rgb out = c1;
      switch (id) {
        case 0:  // checkerboard
          out = (tx + ty) % 2 ? c1 : c2;
          break;
        case 1:  // horizontal stripes
          out = ty % 2 ? c1 : c2;
          break;
        case 2: {  // diagonal stripes
          const long d = static_cast<long>(std::floor((x + y) / period));
          out = d % 2 ? c1 : c2;
          break;
        }
        case 3: {  // bricks
          const double bh = period * 0.5;
          const long row = static_cast<long>(std::floor(y / bh));
          const double off = (row % 2) ? period * 0.5 : 0.0;
          const double bx = std::fmod(x + off, period), by = std::fmod(y, bh);
          out = (bx < 1.0 || by < 1.0) ? c2 : c1;
          break;
        }
        case 4: {  // dot grid
          const double dx = std::fmod(x, period) - period / 2, dy = std::fmod(y, period) - period / 2;
          out = dx * dx + dy * dy < period * period / 10.0 ? c2 : c1;
          break;
        }
        default: {  // three-colour tiles
          const long k = ((tx + 2 * ty) % 3 + 3) % 3;
          out = k == 0 ? c1 : (k == 1 ? c2 : c3);
          break;
        }
      }
      cv.set(r, c, out);
    }
  return std::move(cv.tensor());
}

Rgb sky_color(Rng& rng, double v, Rgb top, Rgb horizon) {
  (void)rng;
  return mix(top, horizon, std::clamp(v, 0.0, 1.0));
}

Tensor photo_background(int id, std::uint64_t seed, int size) {
  Rng rng(derive_seed(seed, {kTagBackground, 2}));
  const std::uint64_t nseed = derive_seed(seed, {kTagBackground, 3});
  const Rgb sky_top = jitter(rng, {0.38, 0.55, 0.82}, 0.12);
  const Rgb sky_low = jitter(rng, {0.72, 0.80, 0.90}, 0.08);
  Canvas cv(size);
  const double horizon = rng.uniform(0.35, 0.65);
  const double tex_freq = rng.uniform(4.0, 9.0);

  // Building silhouettes for scene 1.
  struct Block {
    double x0, x1, top;
    Rgb color;
    bool windows;
  };
  std::vector<Block> blocks;
  if (id == 1) {
    double x = rng.uniform(-0.1, 0.1);
    while (x < 1.0) {
      const double w = rng.uniform(0.15, 0.35);
      blocks.push_back({x, x + w, rng.uniform(0.2, 0.6), jitter(rng, {0.45, 0.42, 0.40}, 0.15),
                        rng.uniform() < 0.6});
      x += w + rng.uniform(0.0, 0.06);
    }
  }
  const Rgb ground = jitter(rng, rng.uniform() < 0.5 ? Rgb{0.30, 0.42, 0.20} : Rgb{0.45, 0.38, 0.28}, 0.08);
  const Rgb foliage = jitter(rng, {0.20, 0.38, 0.15}, 0.07);
  const Rgb asphalt = jitter(rng, {0.36, 0.36, 0.37}, 0.06);
  const Rgb wall = jitter(rng, {0.78, 0.72, 0.62}, 0.1);
  const Rgb water = jitter(rng, {0.18, 0.38, 0.48}, 0.08);
  const double door_x0 = rng.uniform(0.1, 0.6), door_w = rng.uniform(0.15, 0.3);
  const double door_top = rng.uniform(0.25, 0.5);
  const Rgb door = jitter(rng, {0.35, 0.25, 0.18}, 0.08);
  const double lane_x = rng.uniform(0.35, 0.65);

  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) {
      const double u = (c + 0.5) / size, v = (r + 0.5) / size;  // v from the top
      const double n = fbm(nseed, u * tex_freq, v * tex_freq, 4, 0.5);
      const double coarse = fbm(nseed + 7, u * 2.0, v * 2.0, 2, 0.5);
      Rgb out;
      switch (id) {
        case 0:  // open land
          out = v < horizon ? sky_color(rng, v / horizon, sky_top, sky_low)
                            : ground * (0.75 + 0.5 * n) * (1.05 - 0.3 * (v - horizon));
          break;
        case 1: {  // buildings against sky
          out = sky_color(rng, v, sky_top, sky_low);
          for (const auto& b : blocks)
            if (u >= b.x0 && u < b.x1 && v >= b.top) {
              out = b.color * (0.85 + 0.3 * coarse);
              if (b.windows && std::fmod(u * 40.0, 3.0) < 1.2 && std::fmod(v * 40.0, 3.5) < 1.4)
                out = out * 0.6;
            }
          break;
        }
        case 2:  // foliage
          out = foliage * (0.45 + 1.1 * n) + Rgb{0.05, 0.08, 0.02} * coarse;
          break;
        case 3: {  // road
          const double road_top = horizon * 0.7;
          if (v < road_top) {
            out = foliage * (0.6 + 0.8 * n);
          } else {
            out = asphalt * (0.85 + 0.3 * n);
            const double depth = (v - road_top) / (1.0 - road_top);
            const double lane = lane_x + (u - lane_x) * 0.0;
            if (std::abs(u - lane) < 0.01 + 0.02 * depth && std::fmod(depth * 6.0, 1.0) < 0.6)
              out = Rgb{0.85, 0.85, 0.78};
          }
          break;
        }
        case 4: {  // indoor wall
          const double du = u - 0.5, dv = v - 0.5;
          out = wall * (1.0 - 0.5 * (du * du + dv * dv)) * (0.95 + 0.1 * coarse);
          if (u >= door_x0 && u < door_x0 + door_w && v >= door_top) out = door * (0.9 + 0.2 * n);
          break;
        }
        default: {  // water under a sky band
          if (v < horizon * 0.5) {
            out = sky_color(rng, v / (horizon * 0.5), sky_top, sky_low);
          } else {
            const double ripple = 0.5 + 0.5 * std::sin(v * 60.0 + 6.0 * n);
            out = water * (0.8 + 0.35 * ripple * (0.5 + n));
          }
          break;
        }
      }
      cv.set(r, c, {std::clamp(out.r, 0.0, 1.0), std::clamp(out.g, 0.0, 1.0),
                    std::clamp(out.b, 0.0, 1.0)});
    }
  return std::move(cv.tensor());
}

// --- plume -----------------------------------------------------------------

struct PlumeField {
  std::vector<double> alpha;
  std::vector<double> shade;
  Rgb color;
};

PlumeField plume_field(const PlumeParams& p, int size, double gap) {
  const double persistence = 0.5 + kRealPersistenceShift * gap;
  Rng rng(derive_seed(p.seed, {kTagPlume}));
  const double x0 = rng.uniform(0.3, 0.7);
  const double v0 = rng.uniform(0.0, 0.12);
  const double reach = 0.3 + 0.45 * p.buoyancy;
  const double phase = rng.uniform(0.0, 100.0);
  const double spread = rng.uniform(0.12, 0.22);
  const double light = rng.uniform(0.62, 0.95);
  const double dark = rng.uniform(0.18, 0.42);
  const double gray = light + kRealToneShift * gap * gap * (dark - light);
  const Rgb color{gray * rng.uniform(0.96, 1.04), gray, gray * rng.uniform(0.96, 1.06)};
  const std::uint64_t nseed = derive_seed(p.seed, {kTagPlume, 1});
  const std::uint64_t wseed = derive_seed(p.seed, {kTagPlume, 2});
  const std::uint64_t sseed = derive_seed(p.seed, {kTagShade});

  PlumeField f;
  f.color = color;
  f.alpha.assign(static_cast<std::size_t>(size) * size, 0.0);
  f.shade.assign(f.alpha.size(), 1.0);
  for (int r = 0; r < size; ++r) {
    const double v = 1.0 - (r + 0.5) / size;  // height from the bottom
    const double h = v - v0;
    if (h < -0.03) continue;
    const double hp = std::max(h, 0.0);
    const double wobble = (value_noise(wseed, hp * 3.0 * p.buoyancy, 0.0) - 0.5) * 0.3;
    const double xc = x0 + p.wind * 0.4 * std::pow(hp, 1.3) + wobble * hp;
    const double width = p.source_width * 0.5 + spread * hp;
    const double vertical =
        std::clamp((reach - hp) / 0.2, 0.0, 1.0) * std::clamp((h + 0.03) / 0.06, 0.0, 1.0);
    if (vertical <= 0.0) continue;
    for (int c = 0; c < size; ++c) {
      const double u = (c + 0.5) / size;
      const double lat = (u - xc) / width;
      const double lateral = std::exp(-1.5 * lat * lat);
      if (lateral < 1e-4) continue;
      const double turb = fbm(nseed, (u - xc) * 6.0 + 17.0, hp * 6.0 / p.buoyancy + phase,
                              p.octaves, persistence);
      const double t = std::clamp((turb - 0.3) * 1.8, 0.0, 1.0);
      const std::size_t at = static_cast<std::size_t>(r) * size + c;
      f.alpha[at] = std::clamp(p.density * lateral * vertical * (0.25 + 1.1 * t), 0.0, 1.0);
      f.shade[at] = 0.82 + 0.3 * fbm(sseed, u * 8.0, hp * 8.0, 3, 0.5);
    }
  }
  return f;
}

void gaussian_blur(Tensor& img, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) norm += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& w : k) w /= norm;
  const int h = static_cast<int>(img.dim(1)), w = static_cast<int>(img.dim(2));
  std::vector<double> tmp(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < 3; ++c) {
    double* p = img.data().data() + static_cast<std::size_t>(c) * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * p[y * w + std::clamp(x + i, 0, w - 1)];
        tmp[y * w + x] = s;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[std::clamp(y + i, 0, h - 1) * w + x];
        p[y * w + x] = s;
      }
  }
}

void add_grain(Tensor& img, double sigma, std::uint64_t seed) {
  if (sigma <= 0.0) return;
  Rng rng(derive_seed(seed, {kTagGrain}));
  for (auto& v : img.data()) v += rng.normal(0.0, sigma);
}

void apply_gain_and_clamp(Tensor& img, double gain) {
  for (auto& v : img.data()) v = std::clamp(v * gain, 0.0, 1.0);
}

/// Shared renderer of both smoke generators.
SmokeRender render_smoke(const PlumeParams& params, int size, double gap) {
  if (size < 16) throw ContractError("smoke generators need size >= 16");
  params.validate();
  if (gap < 0.0 || gap > 1.0) throw ContractError("gap_strength must lie in [0, 1]");
  for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
    PlumeParams p = params;
    if (attempt > 0) p.seed = derive_seed(params.seed, {hash_tag("retry"), static_cast<std::uint64_t>(attempt)});
    const PlumeField f = plume_field(p, size, gap);

    Mask mask{size, size, std::vector<std::uint8_t>(f.alpha.size(), 0)};
    for (std::size_t i = 0; i < f.alpha.size(); ++i) mask.bits[i] = f.alpha[i] > kMaskThreshold;
    const double cov = mask.coverage();
    if (cov < kMinCoverage || cov > kMaxCoverage) continue;

    Tensor bg = tiled_background(p.background_id, p.seed, size);
    if (gap > 0.0) {
      const Tensor photo = photo_background(p.background_id, p.seed, size);
      for (std::size_t i = 0; i < bg.size(); ++i) bg[i] = (1.0 - gap) * bg[i] + gap * photo[i];
    }
    const std::size_t plane = f.alpha.size();
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = f.alpha[i], s = f.shade[i];
      bg[i] = bg[i] * (1.0 - a) + f.color.r * s * a;
      bg[plane + i] = bg[plane + i] * (1.0 - a) + f.color.g * s * a;
      bg[2 * plane + i] = bg[2 * plane + i] * (1.0 - a) + f.color.b * s * a;
    }
    apply_gain_and_clamp(bg, p.lighting_gain);
    if (gap > 0.0) {
      gaussian_blur(bg, kRealBlurSigma * gap);
      add_grain(bg, kRealGrainSigma * gap, p.seed);
    }
    quantize_8bit(bg);
    return {std::move(bg), std::move(mask), p};
  }
  std::ostringstream os;
  os << "plume coverage outside [" << kMinCoverage << ", " << kMaxCoverage << "] after "
     << kMaxGenerationAttempts << " attempts (seed=" << params.seed
     << ", source_width=" << params.source_width << ", buoyancy=" << params.buoyancy
     << ", wind=" << params.wind << ", density=" << params.density
     << ", lighting_gain=" << params.lighting_gain << ", octaves=" << params.octaves
     << ", background_id=" << params.background_id << ")";
  throw GenerationError(os.str());
}

// 2D DFT power of the mean-removed luminance, by rows then columns.
std::vector<double> power_spectrum(const Tensor& image, std::size_t& h, std::size_t& w) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("expected [3 x H x W] image, got " + to_string(image.shape()));
  h = image.dim(1);
  w = image.dim(2);
  const std::size_t plane = h * w;
  std::vector<std::complex<double>> lum(plane);
  double mean = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    lum[i] = 0.299 * image[i] + 0.587 * image[plane + i] + 0.114 * image[2 * plane + i];
    mean += lum[i].real() / static_cast<double>(plane);
  }
  for (auto& v : lum) v -= mean;
  std::vector<std::complex<double>> tmp(plane);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t k = 0; k < w; ++k) {
      std::complex<double> s = 0.0;
      for (std::size_t x = 0; x < w; ++x)
        s += lum[y * w + x] * std::polar(1.0, -2.0 * kPi * static_cast<double>(k * x % w) / static_cast<double>(w));
      tmp[y * w + k] = s;
    }
  std::vector<double> power(plane);
  for (std::size_t l = 0; l < h; ++l)
    for (std::size_t k = 0; k < w; ++k) {
      std::complex<double> s = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        s += tmp[y * w + k] * std::polar(1.0, -2.0 * kPi * static_cast<double>(l * y % h) / static_cast<double>(h));
      power[l * w + k] = std::norm(s);
    }
  return power;
}

// Radially averaged power, bins 0..max(h,w)/2.
std::vector<double> radial_profile(const std::vector<double>& power, std::size_t h, std::size_t w) {
  const std::size_t bins = std::min(h, w) / 2 + 1;
  std::vector<double> sum(bins, 0.0), count(bins, 0.0);
  for (std::size_t l = 0; l < h; ++l)
    for (std::size_t k = 0; k < w; ++k) {
      const double fy = l <= h / 2 ? static_cast<double>(l) : static_cast<double>(l) - static_cast<double>(h);
      const double fx = k <= w / 2 ? static_cast<double>(k) : static_cast<double>(k) - static_cast<double>(w);
      const auto r = static_cast<std::size_t>(std::lround(std::sqrt(fx * fx + fy * fy)));
      if (r >= bins) continue;
      sum[r] += power[l * w + k];
      count[r] += 1.0;
    }
  for (std::size_t r = 0; r < bins; ++r) sum[r] = count[r] > 0 ? sum[r] / count[r] : 0.0;
  return sum;
}

std::uint64_t row_seed(std::uint64_t master, std::string_view group, std::size_t index, bool test) {
  const std::uint64_t s = derive_seed(master, {hash_tag(group), static_cast<std::uint64_t>(index)});
  return test ? (s | 1ULL) : (s & ~1ULL);
}

// Random crop for scenes without a plume, sized like typical plume boxes.
BBox random_crop(std::uint64_t seed, int size) {
  Rng rng(derive_seed(seed, {hash_tag("crop")}));
  const int w = std::max(4, static_cast<int>(std::lround(rng.uniform(0.35, 0.9) * size)));
  const int h = std::max(4, static_cast<int>(std::lround(rng.uniform(0.45, 1.0) * size)));
  const int c0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - w + 1)));
  const int r0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(size - h + 1)));
  return {r0, c0, r0 + h - 1, c0 + w - 1};
}

}  // namespace

// ---------------------------------------------------------------------------

void PlumeParams::validate() const {
  if (!(source_width > 0.0 && source_width <= 1.0)) throw ContractError("source_width must lie in (0, 1]");
  if (!(buoyancy >= 0.5 && buoyancy <= 1.5)) throw ContractError("buoyancy must lie in [0.5, 1.5]");
  if (!(wind >= -1.0 && wind <= 1.0)) throw ContractError("wind must lie in [-1, 1]");
  if (!(density > 0.0 && density <= 1.0)) throw ContractError("density must lie in (0, 1]");
  if (!(lighting_gain >= 0.6 && lighting_gain <= 1.4))
    throw ContractError("lighting_gain must lie in [0.6, 1.4]");
  if (octaves < 2 || octaves > 6) throw ContractError("octaves must lie in [2, 6]");
  if (background_id < 0 || background_id >= kBackgroundCount)
    throw ContractError("background_id out of range");
}

PlumeParams PlumeParams::sample(std::uint64_t seed, double diversity) {
  if (!(diversity > 0.0 && diversity <= 1.0)) throw ContractError("diversity must lie in (0, 1]");
  Rng rng(derive_seed(seed, {hash_tag("params")}));
  auto draw = [&](double lo, double hi) {
    const double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo) * diversity;
    return rng.uniform(mid - half, mid + half);
  };
  PlumeParams p;
  p.seed = seed;
  p.source_width = draw(0.08, 0.32);
  p.buoyancy = draw(0.5, 1.5);
  p.wind = draw(-1.0, 1.0);
  p.density = draw(0.55, 1.0);
  p.lighting_gain = draw(0.6, 1.4);
  p.octaves = 2 + static_cast<int>(rng.uniform_int(5));
  p.background_id = static_cast<int>(rng.uniform_int(kBackgroundCount));
  return p;
}

double Mask::coverage() const {
  if (bits.empty()) return 0.0;
  std::size_t on = 0;
  for (auto b : bits) on += b != 0;
  return static_cast<double>(on) / static_cast<double>(bits.size());
}

bool Mask::empty() const {
  return std::none_of(bits.begin(), bits.end(), [](std::uint8_t b) { return b != 0; });
}

SmokeRender gen_smoke_synthetic(const PlumeParams& params, int size) {
  return render_smoke(params, size, 0.0);
}

SmokeRender gen_smoke_realproxy(const PlumeParams& params, int size, double gap_strength) {
  return render_smoke(params, size, gap_strength);
}

Tensor gen_nonsmoke(std::uint64_t seed, int size, bool hard_negative) {
  if (size < 16) throw ContractError("gen_nonsmoke needs size >= 16");
  Rng rng(derive_seed(seed, {hash_tag("nonsmoke")}));
  const int scene = static_cast<int>(rng.uniform_int(PlumeParams::kBackgroundCount));
  const double gain = rng.uniform(0.6, 1.4);
  Tensor img = photo_background(scene, seed, size);
  if (hard_negative) {
    // Cloud or fog: broad low-frequency veil, no source and no vertical
    // envelope.
    const std::uint64_t fseed = derive_seed(seed, {kTagFog});
    const double freq = rng.uniform(1.2, 2.6);
    const double level = rng.uniform(0.3, 0.5);
    const double strength = rng.uniform(0.6, 0.95);
    const double gray = rng.uniform(0.65, 0.95);
    const std::size_t plane = static_cast<std::size_t>(size) * size;
    for (int r = 0; r < size; ++r)
      for (int c = 0; c < size; ++c) {
        const double u = (c + 0.5) / size, v = (r + 0.5) / size;
        const double n = fbm(fseed, u * freq, v * freq, 4, 0.45);
        const double a = strength * std::clamp((n - level) * 3.5, 0.0, 1.0);
        const std::size_t at = static_cast<std::size_t>(r) * size + c;
        for (int ch = 0; ch < 3; ++ch) {
          double& px = img[ch * plane + at];
          px = px * (1.0 - a) + gray * a;
        }
      }
  }
  apply_gain_and_clamp(img, gain);
  gaussian_blur(img, kRealBlurSigma);
  add_grain(img, kRealGrainSigma, seed);
  quantize_8bit(img);
  return img;
}

BBox mask_bbox(const Mask& mask, int margin) {
  if (margin < 0) throw ContractError("margin must be non-negative");
  int r0 = mask.height, c0 = mask.width, r1 = -1, c1 = -1;
  for (int r = 0; r < mask.height; ++r)
    for (int c = 0; c < mask.width; ++c)
      if (mask.bits[static_cast<std::size_t>(r) * mask.width + c]) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  if (r1 < 0) throw EmptyRegionError("extract_region: mask is empty");
  return {std::max(0, r0 - margin), std::max(0, c0 - margin), std::min(mask.height - 1, r1 + margin),
          std::min(mask.width - 1, c1 + margin)};
}

Region extract_region(const Tensor& image, const Mask& mask, int margin, int out_size) {
  if (image.rank() != 3 || static_cast<int>(image.dim(1)) != mask.height ||
      static_cast<int>(image.dim(2)) != mask.width)
    throw DimensionError("extract_region: image " + to_string(image.shape()) +
                         " does not match mask " + std::to_string(mask.height) + "x" +
                         std::to_string(mask.width));
  const BBox box = mask_bbox(mask, margin);
  return {crop_resize(image, box, out_size), box};
}

Tensor crop_resize(const Tensor& image, const BBox& box, int out_size) {
  if (image.rank() != 3) throw DimensionError("crop_resize: expected [C x H x W]");
  const int ch = static_cast<int>(image.dim(0)), h = static_cast<int>(image.dim(1)),
            w = static_cast<int>(image.dim(2));
  if (box.row0 < 0 || box.col0 < 0 || box.row1 >= h || box.col1 >= w || box.row0 > box.row1 ||
      box.col0 > box.col1 || out_size < 1)
    throw ContractError("crop_resize: box outside image");
  const double bh = box.row1 - box.row0 + 1, bw = box.col1 - box.col0 + 1;
  const auto n = static_cast<std::size_t>(out_size);
  Tensor out({static_cast<std::size_t>(ch), n, n});
  auto sample = [&](int c, double y, double x) {
    y = std::clamp(y, 0.0, h - 1.0);
    x = std::clamp(x, 0.0, w - 1.0);
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double ty = y - y0, tx = x - x0;
    const double* p = image.data().data() + static_cast<std::size_t>(c) * h * w;
    const double a = p[y0 * w + x0], b = p[y0 * w + x1], cc = p[y1 * w + x0], d = p[y1 * w + x1];
    return (a + (b - a) * tx) * (1.0 - ty) + (cc + (d - cc) * tx) * ty;
  };
  // Downscaling averages 2x2 taps inside each output pixel's footprint.
  const double sy = bh / out_size, sx = bw / out_size;
  const std::vector<double> ty = sy > 1.0 ? std::vector<double>{0.25, 0.75} : std::vector<double>{0.5};
  const std::vector<double> tx = sx > 1.0 ? std::vector<double>{0.25, 0.75} : std::vector<double>{0.5};
  const double norm = 1.0 / static_cast<double>(ty.size() * tx.size());
  for (int c = 0; c < ch; ++c)
    for (int oy = 0; oy < out_size; ++oy)
      for (int ox = 0; ox < out_size; ++ox) {
        double s = 0.0;
        for (double dy : ty)
          for (double dx : tx)
            s += sample(c, box.row0 + (oy + dy) * sy - 0.5, box.col0 + (ox + dx) * sx - 0.5);
        out[(static_cast<std::size_t>(c) * n + oy) * n + ox] = norm * s;
      }
  return out;
}

Tensor hflip(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("hflip: expected [C x H x W]");
  Tensor out(image.shape());
  const std::size_t ch = image.dim(0), h = image.dim(1), w = image.dim(2);
  for (std::size_t c = 0; c < ch; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[(c * h + y) * w + x] = image[(c * h + y) * w + (w - 1 - x)];
  return out;
}

void quantize_8bit(Tensor& image) {
  for (auto& v : image.data()) v = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
}

double spectral_slope(const Tensor& image) {
  std::size_t h = 0, w = 0;
  const auto power = power_spectrum(image, h, w);
  const auto profile = radial_profile(power, h, w);
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  for (std::size_t r = 1; r + 1 < profile.size(); ++r) {
    const double x = std::log(static_cast<double>(r));
    const double y = std::log(profile[r] + 1e-12);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    n += 1.0;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

double low_frequency_energy(const Tensor& image) {
  std::size_t h = 0, w = 0;
  const auto power = power_spectrum(image, h, w);
  const auto profile = radial_profile(power, h, w);
  double s = 0.0;
  for (std::size_t r = 1; r <= 3 && r < profile.size(); ++r) s += profile[r];
  return s / (3.0 * static_cast<double>(h * w));
}

// --- corpora ---------------------------------------------------------------

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kSource: return "source";
    case Split::kTarget: return "target";
    case Split::kTest: return "test";
  }
  throw ContractError("unknown split");
}

Split parse_split(std::string_view name) {
  for (Split s : {Split::kSource, Split::kTarget, Split::kTest})
    if (split_name(s) == name) return s;
  throw ConfigError("unknown split: " + std::string(name));
}

void DatasetSpec::validate() const {
  if (n_source_smoke < 0 || n_target_smoke < 0 || n_test_smoke < 0 || n_test_nonsmoke < 0)
    throw ConfigError("dataset counts must be non-negative");
  if (!(nonsmoke_to_smoke_ratio >= 0.0) || !std::isfinite(nonsmoke_to_smoke_ratio))
    throw ConfigError("nonsmoke_to_smoke_ratio must be non-negative");
  if (image_size < 8 || image_size % 4 != 0) throw ConfigError("image_size must be a multiple of 4");
  if (!(gap_strength >= 0.0 && gap_strength <= 1.0)) throw ConfigError("gap_strength must lie in [0, 1]");
  if (!(target_diversity > 0.0 && target_diversity <= 1.0))
    throw ConfigError("target_diversity must lie in (0, 1]");
  for (double f : {hard_negative_fraction, test_hard_negative_fraction})
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("hard-negative fractions must lie in [0, 1]");
  if (render_scale < 1 || image_size * render_scale < 16) throw ConfigError("render size must be >= 16");
  if (crop_margin < 0) throw ConfigError("crop_margin must be non-negative");
  if (augment_factor < 1) throw ConfigError("augment_factor must be >= 1");
}

int DatasetSpec::nonsmoke_count(int smoke_count) const {
  if (n_nonsmoke_per_dataset >= 0) return n_nonsmoke_per_dataset;
  return static_cast<int>(std::lround(nonsmoke_to_smoke_ratio * smoke_count));
}

std::vector<std::size_t> Corpus::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

std::vector<ManifestRow> Corpus::manifest() const {
  std::vector<ManifestRow> rows;
  rows.reserve(samples.size());
  for (const auto& s : samples) rows.push_back({s.path, s.y_s, s.y_d, s.split, s.mask_bbox});
  return rows;
}

Tensor stack_images(const Corpus& corpus, std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("stack_images: no rows");
  const Shape one = corpus.samples.at(rows[0]).image.shape();
  Shape shape{rows.size()};
  shape.insert(shape.end(), one.begin(), one.end());
  Tensor out(shape);
  const std::size_t stride = shape_numel(one);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Tensor& img = corpus.samples.at(rows[i]).image;
    if (img.shape() != one) throw DimensionError("stack_images: mixed image shapes");
    std::copy(img.data().begin(), img.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

std::string sample_path(Split split, int y_d, int y_s, std::uint64_t seed, const std::string& suffix) {
  std::ostringstream os;
  os << split_name(split) << '/' << (y_d == 0 ? "synthetic" : "real") << '/'
     << (y_s == 1 ? "smoke" : "nonsmoke") << '/' << seed << suffix << ".png";
  return os.str();
}

Corpus build_dataset(const DatasetSpec& spec) {
  spec.validate();
  const int render = spec.image_size * spec.render_scale;
  const int margin = spec.crop_margin * spec.render_scale / 2;
  Corpus corpus;
  corpus.spec = spec;

  auto add_smoke = [&](Split split, int y_d, std::size_t count, std::string_view group,
                       double diversity) {
    const bool test = split == Split::kTest;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t seed = row_seed(spec.master_seed, group, i, test);
      const PlumeParams params = PlumeParams::sample(seed, diversity);
      const SmokeRender r = y_d == 0 ? gen_smoke_synthetic(params, render)
                                     : gen_smoke_realproxy(params, render, spec.gap_strength);
      Region region = extract_region(r.image, r.mask, margin, spec.image_size);
      quantize_8bit(region.image);
      corpus.samples.push_back({std::move(region.image), 1, y_d, split, region.bbox, seed,
                                sample_path(split, y_d, 1, seed)});
    }
  };
  auto add_nonsmoke = [&](Split split, std::size_t count, std::string_view group,
                          double hard_fraction) {
    const bool test = split == Split::kTest;
    for (std::size_t i = 0; i < count; ++i) {
      const std::uint64_t seed = row_seed(spec.master_seed, group, i, test);
      Rng pick(derive_seed(seed, {hash_tag("hard")}));
      const bool hard = pick.uniform() < hard_fraction;
      Tensor image = crop_resize(gen_nonsmoke(seed, render, hard), random_crop(seed, render),
                                 spec.image_size);
      quantize_8bit(image);
      corpus.samples.push_back({std::move(image), 0, 1, split, std::nullopt, seed,
                                sample_path(split, 1, 0, seed)});
    }
  };

  const auto count = [](int n) { return static_cast<std::size_t>(n); };
  add_smoke(Split::kSource, 0, count(spec.n_source_smoke), "source-smoke", 1.0);
  add_nonsmoke(Split::kSource, count(spec.nonsmoke_count(spec.n_source_smoke)), "source-nonsmoke",
               spec.hard_negative_fraction);
  add_smoke(Split::kTarget, 1, count(spec.n_target_smoke), "target-smoke", spec.target_diversity);
  add_nonsmoke(Split::kTarget, count(spec.nonsmoke_count(spec.n_target_smoke)), "target-nonsmoke",
               spec.hard_negative_fraction);
  add_smoke(Split::kTest, 1, count(spec.n_test_smoke), "test-smoke", 1.0);
  add_nonsmoke(Split::kTest, count(spec.n_test_nonsmoke), "test-nonsmoke",
               spec.test_hard_negative_fraction);

  if (spec.augment_factor > 1) {
    Rng rng(derive_seed(spec.master_seed, {hash_tag("augment")}));
    corpus = augment_target(corpus, spec.augment_factor, rng);
  }
  return corpus;
}

Corpus augment_target(const Corpus& corpus, int factor, Rng& rng) {
  if (factor < 1) throw ContractError("augment_target: factor must be >= 1");
  Corpus out = corpus;
  if (factor == 1) return out;
  for (const auto& s : corpus.samples) {
    if (s.split != Split::kTarget || s.y_s != 1) continue;
    const int size = static_cast<int>(s.image.dim(1));
    for (int k = 1; k < factor; ++k) {
      LabeledSample copy = s;
      copy.seed = derive_seed(s.seed, {hash_tag("aug"), static_cast<std::uint64_t>(k)}) & ~1ULL;
      copy.path = sample_path(s.split, s.y_d, s.y_s, copy.seed);
      Tensor img = rng.uniform() < 0.5 ? hflip(s.image) : s.image;
      const int max_cut = size / 10;
      auto cut = [&] { return static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(max_cut + 1))); };
      const int top = cut(), bottom = cut(), left = cut(), right = cut();
      img = crop_resize(img, {top, left, size - 1 - bottom, size - 1 - right}, size);
      const double gain = rng.uniform(0.9, 1.1);
      for (auto& v : img.data()) v *= gain;
      quantize_8bit(img);
      copy.image = std::move(img);
      out.samples.push_back(std::move(copy));
    }
  }
  return out;
}

std::string manifest_line(const ManifestRow& row) {
  nlohmann::ordered_json j;
  j["path"] = row.path;
  j["y_s"] = row.y_s;
  j["y_d"] = row.y_d;
  j["split"] = split_name(row.split);
  if (row.bbox) j["bbox"] = {row.bbox->row0, row.bbox->col0, row.bbox->row1, row.bbox->col1};
  return j.dump();
}

ManifestRow parse_manifest_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    ManifestRow row;
    row.path = j.at("path").get<std::string>();
    row.y_s = j.at("y_s").get<int>();
    row.y_d = j.at("y_d").get<int>();
    row.split = parse_split(j.at("split").get<std::string>());
    if (j.contains("bbox")) {
      const auto& b = j.at("bbox");
      row.bbox = BBox{b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(), b.at(3).get<int>()};
    }
    return row;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed manifest line: ") + e.what());
  }
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  std::vector<ManifestRow> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(parse_manifest_line(line));
  return rows;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& s : corpus.samples) {
    const fs::path file = dir / s.path;
    fs::create_directories(file.parent_path(), ec);
    if (ec) throw IoError("cannot create " + file.parent_path().string() + ": " + ec.message());
    write_png(file, s.image);
  }
  std::string text;
  for (const auto& row : corpus.manifest()) text += manifest_line(row) + '\n';
  write_file_atomic(dir / "manifest.jsonl", text);
}

Corpus load_corpus(const std::filesystem::path& dir, const DatasetSpec& spec) {
  Corpus corpus;
  corpus.spec = spec;
  for (const auto& row : read_manifest(dir / "manifest.jsonl")) {
    LabeledSample s;
    s.image = read_png(dir / row.path);
    s.y_s = row.y_s;
    s.y_d = row.y_d;
    s.split = row.split;
    s.mask_bbox = row.bbox;
    s.path = row.path;
    try {
      s.seed = std::stoull(std::filesystem::path(row.path).stem().string());
    } catch (const std::exception&) {
      s.seed = 0;
    }
    corpus.samples.push_back(std::move(s));
  }
  return corpus;
}

std::size_t count_label_violations(const std::vector<ManifestRow>& rows) {
  std::size_t bad = 0;
  for (const auto& r : rows) {
    bool ok = (r.y_s == 0 || r.y_s == 1) && (r.y_d == 0 || r.y_d == 1);
    ok = ok && (r.y_d == 1 || r.y_s == 1);
    ok = ok && (r.bbox.has_value() == (r.y_s == 1));
    if (r.split != Split::kSource) ok = ok && r.y_d == 1;
    if (r.split == Split::kSource) ok = ok && (r.y_s == 1) == (r.y_d == 0);
    bad += !ok;
  }
  return bad;
}

}  // namespace smokeda
