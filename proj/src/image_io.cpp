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

#include "smokeda/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "smokeda/errors.hpp"

namespace smokeda {

void write_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3)
    throw DimensionError("write_png: expected [3 x H x W], got " + to_string(image.shape()));
  const std::size_t h = image.dim(1), w = image.dim(2);
  std::vector<png_byte> rgb(h * w * 3);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) {
      const double v = std::clamp(image[c * h * w + i], 0.0, 1.0);
      rgb[i * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0));
    }
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, rgb.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + img.message);
}

Tensor read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("cannot read " + path.string() + ": " + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<png_byte> rgb(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, rgb.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("cannot decode " + path.string() + ": " + img.message);
  }
  const std::size_t h = img.height, w = img.width;
  Tensor out({3, h, w});
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < h * w; ++i) out[c * h * w + i] = rgb[i * 3 + c] / 255.0;
  return out;
}

}  // namespace smokeda
