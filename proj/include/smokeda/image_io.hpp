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

#include <filesystem>

#include "smokeda/tensor.hpp"

namespace smokeda {

/// 8-bit RGB PNG. The image is [3 x H x W] in [0, 1]; values are rounded to
/// the nearest 8-bit level.
void write_png(const std::filesystem::path& path, const Tensor& image);
Tensor read_png(const std::filesystem::path& path);

}  // namespace smokeda
