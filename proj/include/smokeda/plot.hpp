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
#include <span>
#include <string>
#include <vector>

#include "smokeda/tensor.hpp"

namespace smokeda {

/// Scatter plot of a 2D embedding coloured by sample group: synthetic smoke
/// blue, real smoke green, non-smoke red. One <circle> per point; the legend
/// uses rectangles. Throws ContractError on empty input and DimensionError
/// on length mismatch.
std::string feature_plot_svg(const Tensor& embedding, std::span<const int> y_s,
                             std::span<const int> y_d, const std::string& title = "feature distribution");

void emit_feature_plot(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d,
                       const std::filesystem::path& path);

/// `x,y,y_s,y_d` rows.
std::string embedding_csv(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d);

struct Series {
  std::string name;
  std::vector<double> x, y;
};

/// Line chart of one or more series on shared axes.
std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label);

}  // namespace smokeda
