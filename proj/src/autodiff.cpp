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

#include "smokeda/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "smokeda/errors.hpp"

namespace smokeda {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

MapMat as_mat(Tensor& t, std::size_t rows, std::size_t cols) {
  return MapMat(t.data().data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
ConstMapMat as_mat(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMapMat(t.data().data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + to_string(v.shape()));
}

struct ImageDims {
  std::size_t n, c, h, w;
  bool batched;
};

ImageDims image_dims(const Var& x, const char* op) {
  const auto& s = x.shape();
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  throw DimensionError(std::string(op) + ": expected [N x C x H x W] or [C x H x W], got " +
                       to_string(s));
}

Shape image_shape(const ImageDims& d, std::size_t c, std::size_t h, std::size_t w) {
  if (d.batched) return {d.n, c, h, w};
  return {c, h, w};
}

}  // namespace

const Tensor& Var::value() const { return graph_->value(id_); }

void GrlConfig::validate() const {
  if (!std::isfinite(phi) || phi == 0.0)
    throw ConfigError("GRL factor phi must be finite and nonzero");
}

const Tensor& Gradients::at(NodeId id) const {
  if (!contains(id)) throw ContractError("no gradient recorded for node " + std::to_string(id));
  return *grads_[id];
}

Var Graph::constant(Tensor value) {
  nodes_.push_back({"constant", {}, {}, std::move(value), {}, false});
  return {this, nodes_.size() - 1};
}

Var Graph::variable(Tensor value, std::string name) {
  nodes_.push_back({"variable", std::move(name), {}, std::move(value), {}, true});
  return {this, nodes_.size() - 1};
}

Var Graph::record(std::string op, std::span<const Var> inputs, Tensor value,
                  BackwardFn backward) {
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    if (&in.graph() != this) throw ContractError(node.op + ": input from another graph");
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {this, nodes_.size() - 1};
}

Gradients Graph::backward(Var loss) const {
  if (&loss.graph() != this) throw ContractError("backward: loss from another graph");
  const Tensor& lv = value(loss.id());
  if (lv.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + to_string(lv.shape()));

  std::vector<std::optional<Tensor>> grads(nodes_.size());
  grads[loss.id()] = Tensor(lv.shape(), 1.0);

  std::vector<Tensor*> slots;
  for (std::size_t k = loss.id() + 1; k-- > 0;) {
    const Node& node = nodes_[k];
    if (!grads[k] || !node.backward) continue;
    slots.assign(node.inputs.size(), nullptr);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const NodeId in = node.inputs[i];
      if (!nodes_[in].requires_grad) continue;
      if (!grads[in]) grads[in] = Tensor(nodes_[in].value.shape(), 0.0);
      slots[i] = &*grads[in];
    }
    node.backward(*grads[k], slots);
  }
  return Gradients(std::move(grads));
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], n = a.shape()[1], k = b.shape()[1];
  if (b.shape()[0] != n)
    throw DimensionError("matmul: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()) + " do not conform");
  Tensor out({m, k});
  as_mat(out, m, k).noalias() = as_mat(a.value(), m, n) * as_mat(b.value(), n, k);
  Graph& g = a.graph();
  return g.record("matmul", {a, b}, std::move(out),
                  [&g, ia = a.id(), ib = b.id(), m, n, k](const Tensor& go,
                                                          std::span<Tensor* const> gi) {
                    auto gout = as_mat(go, m, k);
                    if (gi[0]) as_mat(*gi[0], m, n).noalias() += gout * as_mat(g.value(ib), n, k).transpose();
                    if (gi[1]) as_mat(*gi[1], n, k).noalias() += as_mat(g.value(ia), m, n).transpose() * gout;
                  });
}

Var affine(Var x, Var W, Var b) {
  require_rank(x, 2, "affine");
  require_rank(W, 2, "affine");
  const std::size_t m = x.shape()[0], n = x.shape()[1], k = W.shape()[1];
  if (W.shape()[0] != n || b.value().size() != k || b.value().rank() != 1)
    throw DimensionError("affine: x " + to_string(x.shape()) + ", W " + to_string(W.shape()) +
                         ", b " + to_string(b.shape()) + " do not conform");
  Tensor out({m, k});
  auto o = as_mat(out, m, k);
  o.noalias() = as_mat(x.value(), m, n) * as_mat(W.value(), n, k);
  o.rowwise() += as_mat(b.value(), 1, k).row(0);
  Graph& g = x.graph();
  return g.record("affine", {x, W, b}, std::move(out),
                  [&g, ix = x.id(), iw = W.id(), m, n, k](const Tensor& go,
                                                          std::span<Tensor* const> gi) {
                    auto gout = as_mat(go, m, k);
                    if (gi[0]) as_mat(*gi[0], m, n).noalias() += gout * as_mat(g.value(iw), n, k).transpose();
                    if (gi[1]) as_mat(*gi[1], n, k).noalias() += as_mat(g.value(ix), m, n).transpose() * gout;
                    if (gi[2]) {
                      // Plain loop: Eigen's vectorized reduction order depends on
                      // buffer alignment, which would break run-to-run bit equality.
                      double* gb = gi[2]->data().data();
                      const double* gp = go.data().data();
                      for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t c = 0; c < k; ++c) gb[c] += gp[r * k + c];
                    }
                  });
}

Var conv2d(Var x, Var kernels, int stride, int pad) {
  const ImageDims d = image_dims(x, "conv2d");
  require_rank(kernels, 4, "conv2d");
  const auto& ks = kernels.shape();
  const std::size_t c_out = ks[0], kh = ks[2], kw = ks[3];
  if (ks[1] != d.c)
    throw DimensionError("conv2d: input " + to_string(x.shape()) + " has " + std::to_string(d.c) +
                         " channels, kernels " + to_string(ks) + " expect " +
                         std::to_string(ks[1]));
  if (stride != 1 && stride != 2) throw ContractError("conv2d: stride must be 1 or 2");
  if (pad < 0) throw ContractError("conv2d: negative padding");
  const auto hp = static_cast<long>(d.h) + 2L * pad, wp = static_cast<long>(d.w) + 2L * pad;
  if (hp < static_cast<long>(kh) || wp < static_cast<long>(kw))
    throw DimensionError("conv2d: padded input " + to_string(x.shape()) +
                         " smaller than kernel " + to_string(ks));
  const std::size_t ho = static_cast<std::size_t>((hp - static_cast<long>(kh)) / stride + 1);
  const std::size_t wo = static_cast<std::size_t>((wp - static_cast<long>(kw)) / stride + 1);
  const std::size_t ckk = d.c * kh * kw, hw_out = ho * wo, hw_in = d.h * d.w;

  // Unrolled patches, one [ckk x hw_out] block per image, kept for backward.
  auto cols = std::make_shared<std::vector<double>>(d.n * ckk * hw_out, 0.0);
  const double* xin = x.value().data().data();
  for (std::size_t n = 0; n < d.n; ++n) {
    double* col = cols->data() + n * ckk * hw_out;
    const double* img = xin + n * d.c * hw_in;
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < kh; ++i)
        for (std::size_t j = 0; j < kw; ++j) {
          double* row = col + ((c * kh + i) * kw + j) * hw_out;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const long iy = static_cast<long>(oy) * stride + static_cast<long>(i) - pad;
            if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
            const double* src = img + c * hw_in + static_cast<std::size_t>(iy) * d.w;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const long ix = static_cast<long>(ox) * stride + static_cast<long>(j) - pad;
              if (ix >= 0 && ix < static_cast<long>(d.w)) row[oy * wo + ox] = src[ix];
            }
          }
        }
  }

  Tensor out(image_shape(d, c_out, ho, wo));
  const auto kmat = as_mat(kernels.value(), c_out, ckk);
  for (std::size_t n = 0; n < d.n; ++n) {
    MapMat o(out.data().data() + n * c_out * hw_out, static_cast<Eigen::Index>(c_out),
             static_cast<Eigen::Index>(hw_out));
    ConstMapMat col(cols->data() + n * ckk * hw_out, static_cast<Eigen::Index>(ckk),
                    static_cast<Eigen::Index>(hw_out));
    o.noalias() = kmat * col;
  }

  Graph& g = x.graph();
  return g.record(
      "conv2d", {x, kernels}, std::move(out),
      [&g, ik = kernels.id(), cols, d, c_out, kh, kw, ho, wo, ckk, hw_out, hw_in, stride,
       pad](const Tensor& go, std::span<Tensor* const> gi) {
        const auto kmat = as_mat(g.value(ik), c_out, ckk);
        RowMat dcol;
        for (std::size_t n = 0; n < d.n; ++n) {
          ConstMapMat gout(go.data().data() + n * c_out * hw_out,
                           static_cast<Eigen::Index>(c_out), static_cast<Eigen::Index>(hw_out));
          ConstMapMat col(cols->data() + n * ckk * hw_out, static_cast<Eigen::Index>(ckk),
                          static_cast<Eigen::Index>(hw_out));
          if (gi[1]) as_mat(*gi[1], c_out, ckk).noalias() += gout * col.transpose();
          if (!gi[0]) continue;
          dcol.noalias() = kmat.transpose() * gout;
          double* img = gi[0]->data().data() + n * d.c * hw_in;
          for (std::size_t c = 0; c < d.c; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const double* row = dcol.data() + ((c * kh + i) * kw + j) * hw_out;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const long iy = static_cast<long>(oy) * stride + static_cast<long>(i) - pad;
                  if (iy < 0 || iy >= static_cast<long>(d.h)) continue;
                  double* dst = img + c * hw_in + static_cast<std::size_t>(iy) * d.w;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const long ix = static_cast<long>(ox) * stride + static_cast<long>(j) - pad;
                    if (ix >= 0 && ix < static_cast<long>(d.w)) dst[ix] += row[oy * wo + ox];
                  }
                }
              }
        }
      });
}

Var add_channel_bias(Var x, Var b) {
  const ImageDims d = image_dims(x, "add_channel_bias");
  if (b.value().rank() != 1 || b.value().size() != d.c)
    throw DimensionError("add_channel_bias: input " + to_string(x.shape()) + ", bias " +
                         to_string(b.shape()));
  const std::size_t hw = d.h * d.w;
  Tensor out = x.value();
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t c = 0; c < d.c; ++c) {
      double* p = out.data().data() + (n * d.c + c) * hw;
      const double bc = b.value()[c];
      for (std::size_t i = 0; i < hw; ++i) p[i] += bc;
    }
  return x.graph().record("add_channel_bias", {x, b}, std::move(out),
                          [d, hw](const Tensor& go, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
                            if (gi[1])
                              for (std::size_t n = 0; n < d.n; ++n)
                                for (std::size_t c = 0; c < d.c; ++c) {
                                  const double* p = go.data().data() + (n * d.c + c) * hw;
                                  double s = 0.0;
                                  for (std::size_t i = 0; i < hw; ++i) s += p[i];
                                  (*gi[1])[c] += s;
                                }
                          });
}

Var relu(Var x) {
  Tensor out = x.value();
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  Graph& g = x.graph();
  return g.record("relu", {x}, std::move(out),
                  [&g, ix = x.id()](const Tensor& go, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    const Tensor& xv = g.value(ix);
                    for (std::size_t i = 0; i < go.size(); ++i)
                      if (xv[i] > 0.0) (*gi[0])[i] += go[i];
                  });
}

Var maxpool2(Var x) {
  const ImageDims d = image_dims(x, "maxpool2");
  if (d.h % 2 || d.w % 2)
    throw DimensionError("maxpool2: spatial dims must be even, got " + to_string(x.shape()));
  const std::size_t ho = d.h / 2, wo = d.w / 2;
  Tensor out(image_shape(d, d.c, ho, wo));
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
  const Tensor& xv = x.value();
  std::size_t k = 0;
  for (std::size_t plane = 0; plane < d.n * d.c; ++plane) {
    const std::size_t base = plane * d.h * d.w;
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox, ++k) {
        std::size_t best = base + (2 * oy) * d.w + 2 * ox;
        const std::size_t cand[3] = {best + 1, best + d.w, best + d.w + 1};
        for (std::size_t c : cand)
          if (xv[c] > xv[best]) best = c;
        out[k] = xv[best];
        (*argmax)[k] = best;
      }
  }
  return x.graph().record("maxpool2", {x}, std::move(out),
                          [argmax](const Tensor& go, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < go.size(); ++i)
                              (*gi[0])[(*argmax)[i]] += go[i];
                          });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.graph().record("reshape", {x}, std::move(out),
                          [](const Tensor& go, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
                          });
}

Var flatten(Var x) {
  const auto& s = x.shape();
  if (s.empty()) throw DimensionError("flatten: rank-0 tensor");
  return reshape(x, {s[0], x.value().size() / s[0]});
}

Var softmax(Var logits) {
  require_rank(logits, 2, "softmax");
  const std::size_t m = logits.shape()[0], k = logits.shape()[1];
  Tensor out({m, k});
  const Tensor& z = logits.value();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = z.at(i, 0);
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, z.at(i, j));
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += out.at(i, j) = std::exp(z.at(i, j) - mx);
    for (std::size_t j = 0; j < k; ++j) out.at(i, j) /= s;
  }
  Graph& g = logits.graph();
  const NodeId self = g.size();
  return g.record("softmax", {logits}, std::move(out),
                  [&g, self, m, k](const Tensor& go, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    const Tensor& y = g.value(self);
                    for (std::size_t i = 0; i < m; ++i) {
                      double dot = 0.0;
                      for (std::size_t j = 0; j < k; ++j) dot += go.at(i, j) * y.at(i, j);
                      for (std::size_t j = 0; j < k; ++j)
                        gi[0]->at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
                    }
                  });
}

Var grl(Var x, const GrlConfig& cfg) {
  cfg.validate();
  return x.graph().record("grl", {x}, x.value(),
                          [phi = cfg.phi](const Tensor& go, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += phi * go[i];
                          });
}

Var add(Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph().record("add", {a, b}, std::move(out),
                          [](const Tensor& go, std::span<Tensor* const> gi) {
                            for (auto* t : gi)
                              if (t)
                                for (std::size_t i = 0; i < go.size(); ++i) (*t)[i] += go[i];
                          });
}

Var sub(Var a, Var b) {
  if (a.shape() != b.shape())
    throw DimensionError("sub: shapes " + to_string(a.shape()) + " and " + to_string(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return a.graph().record("sub", {a, b}, std::move(out),
                          [](const Tensor& go, std::span<Tensor* const> gi) {
                            if (gi[0])
                              for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += go[i];
                            if (gi[1])
                              for (std::size_t i = 0; i < go.size(); ++i) (*gi[1])[i] -= go[i];
                          });
}

Var scale(Var x, double c) {
  Tensor out = x.value();
  for (auto& v : out.data()) v *= c;
  return x.graph().record("scale", {x}, std::move(out),
                          [c](const Tensor& go, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            for (std::size_t i = 0; i < go.size(); ++i) (*gi[0])[i] += c * go[i];
                          });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return x.graph().record("sum", {x}, Tensor::scalar(s),
                          [](const Tensor& go, std::span<Tensor* const> gi) {
                            if (!gi[0]) return;
                            const double g0 = go[0];
                            for (auto& v : gi[0]->data()) v += g0;
                          });
}

Var sum_squares(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v * v;
  Graph& g = x.graph();
  return g.record("sum_squares", {x}, Tensor::scalar(s),
                  [&g, ix = x.id()](const Tensor& go, std::span<Tensor* const> gi) {
                    if (!gi[0]) return;
                    const Tensor& xv = g.value(ix);
                    const double g2 = 2.0 * go[0];
                    for (std::size_t i = 0; i < xv.size(); ++i) (*gi[0])[i] += g2 * xv[i];
                  });
}

Var select_rows(Var x, std::vector<std::size_t> rows) {
  require_rank(x, 2, "select_rows");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (rows.empty()) throw ContractError("select_rows: empty row set");
  Tensor out({rows.size(), n});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) throw DimensionError("select_rows: row index out of range");
    std::copy_n(x.value().data().data() + rows[r] * n, n, out.data().data() + r * n);
  }
  return x.graph().record(
      "select_rows", {x}, std::move(out),
      [rows = std::move(rows), n](const Tensor& go, std::span<Tensor* const> gi) {
        if (!gi[0]) return;
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t j = 0; j < n; ++j) (*gi[0])[rows[r] * n + j] += go[r * n + j];
      });
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_grad: eps must be positive");
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = f(probe);
    probe[i] = orig - eps;
    const double fm = f(probe);
    probe[i] = orig;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("max_relative_error: shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  double diff = 0.0, scale_ = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale_ = std::max({scale_, std::abs(a[i]), std::abs(b[i])});
  }
  return scale_ == 0.0 ? 0.0 : diff / scale_;
}

}  // namespace smokeda
