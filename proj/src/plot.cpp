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

#include "smokeda/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "smokeda/errors.hpp"
#include "smokeda/files.hpp"

namespace smokeda {

namespace {

constexpr double kWidth = 640, kHeight = 480;
constexpr double kLeft = 60, kRight = 170, kTop = 40, kBottom = 50;

struct Group {
  const char* name;
  const char* color;
};

constexpr Group kGroups[3] = {
    {"synthetic smoke", "#1f4fd8"},
    {"real smoke", "#1a9c3c"},
    {"non-smoke", "#d62728"},
};
constexpr const char* kLineColors[] = {"#1f4fd8", "#d62728", "#1a9c3c", "#9467bd", "#ff7f0e", "#17becf"};

int group_of(int y_s, int y_d) { return y_s == 0 ? 2 : (y_d == 0 ? 0 : 1); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

struct Frame {
  double x0, x1, y0, y1;

  double px(double x) const { return kLeft + (x - x0) / (x1 - x0) * (kWidth - kLeft - kRight); }
  double py(double y) const { return kHeight - kBottom - (y - y0) / (y1 - y0) * (kHeight - kTop - kBottom); }
};

Frame frame_for(double x0, double x1, double y0, double y1) {
  if (x1 <= x0) x1 = x0 + 1.0;
  if (y1 <= y0) y1 = y0 + 1.0;
  const double mx = 0.05 * (x1 - x0), my = 0.05 * (y1 - y0);
  return {x0 - mx, x1 + mx, y0 - my, y1 + my};
}

std::string header(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt("%.0f", kWidth) +
                   "\" height=\"" + fmt("%.0f", kHeight) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fmt("%.0f", kWidth) + "\" height=\"" + fmt("%.0f", kHeight) +
       "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fmt("%.1f", kWidth / 2) + "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" +
       escape(title) + "</text>\n";
  return s;
}

std::string axes(const Frame& f, const std::string& x_label, const std::string& y_label) {
  const double left = kLeft, right = kWidth - kRight, top = kTop, bottom = kHeight - kBottom;
  std::string s = "<g stroke=\"black\" stroke-width=\"1\">\n";
  s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", bottom) + "\" x2=\"" + fmt("%.1f", right) +
       "\" y2=\"" + fmt("%.1f", bottom) + "\"/>\n";
  s += "<line x1=\"" + fmt("%.1f", left) + "\" y1=\"" + fmt("%.1f", top) + "\" x2=\"" + fmt("%.1f", left) +
       "\" y2=\"" + fmt("%.1f", bottom) + "\"/>\n</g>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = f.x0 + (f.x1 - f.x0) * t / 4.0, yv = f.y0 + (f.y1 - f.y0) * t / 4.0;
    s += "<text x=\"" + fmt("%.1f", f.px(xv)) + "\" y=\"" + fmt("%.1f", bottom + 16) +
         "\" text-anchor=\"middle\">" + fmt("%.3g", xv) + "</text>\n";
    s += "<text x=\"" + fmt("%.1f", left - 6) + "\" y=\"" + fmt("%.1f", f.py(yv) + 4) +
         "\" text-anchor=\"end\">" + fmt("%.3g", yv) + "</text>\n";
  }
  s += "<text x=\"" + fmt("%.1f", (left + right) / 2) + "\" y=\"" + fmt("%.1f", kHeight - 12) +
       "\" text-anchor=\"middle\">" + escape(x_label) + "</text>\n";
  s += "<text x=\"16\" y=\"" + fmt("%.1f", (top + bottom) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
       fmt("%.1f", (top + bottom) / 2) + ")\">" + escape(y_label) + "</text>\n";
  return s;
}

std::string legend_entry(int index, const char* color, const std::string& name) {
  const double x = kWidth - kRight + 16, y = kTop + 10 + 20.0 * index;
  return "<rect x=\"" + fmt("%.1f", x) + "\" y=\"" + fmt("%.1f", y - 9) + "\" width=\"10\" height=\"10\" fill=\"" +
         color + "\"/>\n<text x=\"" + fmt("%.1f", x + 16) + "\" y=\"" + fmt("%.1f", y) + "\">" + escape(name) +
         "</text>\n";
}

void check_labels(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d) {
  if (embedding.rank() != 2 || embedding.dim(1) != 2)
    throw DimensionError("expected an [n x 2] embedding, got " + to_string(embedding.shape()));
  if (y_s.size() != embedding.dim(0) || y_d.size() != embedding.dim(0))
    throw DimensionError("embedding and labels differ in length");
}

}  // namespace

std::string feature_plot_svg(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d,
                             const std::string& title) {
  if (embedding.size() == 0 || y_s.empty()) throw ContractError("feature plot of no points");
  check_labels(embedding, y_s, y_d);
  const std::size_t n = embedding.dim(0);
  double x0 = embedding[0], x1 = x0, y0 = embedding[1], y1 = y0;
  for (std::size_t i = 0; i < n; ++i) {
    x0 = std::min(x0, embedding[2 * i]);
    x1 = std::max(x1, embedding[2 * i]);
    y0 = std::min(y0, embedding[2 * i + 1]);
    y1 = std::max(y1, embedding[2 * i + 1]);
  }
  const Frame f = frame_for(x0, x1, y0, y1);
  std::string s = header(title) + axes(f, "t-SNE 1", "t-SNE 2");
  for (int g = 0; g < 3; ++g) {
    s += "<g fill=\"" + std::string(kGroups[g].color) + "\" fill-opacity=\"0.7\">\n";
    for (std::size_t i = 0; i < n; ++i)
      if (group_of(y_s[i], y_d[i]) == g)
        s += "<circle cx=\"" + fmt("%.2f", f.px(embedding[2 * i])) + "\" cy=\"" +
             fmt("%.2f", f.py(embedding[2 * i + 1])) + "\" r=\"3\"/>\n";
    s += "</g>\n";
  }
  for (int g = 0; g < 3; ++g) s += legend_entry(g, kGroups[g].color, kGroups[g].name);
  return s + "</svg>\n";
}

void emit_feature_plot(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d,
                       const std::filesystem::path& path) {
  write_file_atomic(path, feature_plot_svg(embedding, y_s, y_d));
}

std::string embedding_csv(const Tensor& embedding, std::span<const int> y_s, std::span<const int> y_d) {
  check_labels(embedding, y_s, y_d);
  std::string out = "x,y,y_s,y_d\n";
  char line[96];
  for (std::size_t i = 0; i < embedding.dim(0); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g,%d,%d\n", embedding[2 * i], embedding[2 * i + 1], y_s[i], y_d[i]);
    out += line;
  }
  return out;
}

std::string line_plot_svg(const std::vector<Series>& series, const std::string& title,
                          const std::string& x_label, const std::string& y_label) {
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DimensionError("series " + s.name + " has mismatched x and y");
    for (double v : s.x) {
      x0 = std::min(x0, v);
      x1 = std::max(x1, v);
    }
    for (double v : s.y) {
      y0 = std::min(y0, v);
      y1 = std::max(y1, v);
    }
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw ContractError("line plot of no points");
  const Frame f = frame_for(x0, x1, y0, y1);
  std::string out = header(title) + axes(f, x_label, y_label);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kLineColors[k % std::size(kLineColors)];
    std::string pts;
    for (std::size_t i = 0; i < series[k].x.size(); ++i)
      pts += (i ? " " : "") + fmt("%.2f", f.px(series[k].x[i])) + "," + fmt("%.2f", f.py(series[k].y[i]));
    out += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    out += legend_entry(static_cast<int>(k), color, series[k].name);
  }
  return out + "</svg>\n";
}

}  // namespace smokeda
