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

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "smokeda/tensor.hpp"

namespace smokeda {

using NodeId = std::size_t;
class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  Var(Graph* graph, NodeId id) : graph_(graph), id_(id) {}

  Graph& graph() const { return *graph_; }
  NodeId id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  NodeId id_ = 0;
};

/// Gradient reversal multiplier. The forward pass is the identity.
struct GrlConfig {
  double phi = -1.0;
  void validate() const;
};

/// Receives the gradient flowing into a node's output and accumulates into
/// the gradients of its inputs. Entries are null for inputs that do not
/// require a gradient.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Tensor* const> input_grads)>;

/// Result of a backward pass: one optional tensor per graph node.
class Gradients {
 public:
  explicit Gradients(std::vector<std::optional<Tensor>> grads) : grads_(std::move(grads)) {}

  bool contains(NodeId id) const { return id < grads_.size() && grads_[id].has_value(); }
  bool contains(Var v) const { return contains(v.id()); }
  const Tensor& at(NodeId id) const;
  const Tensor& operator[](Var v) const { return at(v.id()); }

 private:
  std::vector<std::optional<Tensor>> grads_;
};

/// Define-by-run tape. Nodes are appended in evaluation order, so node ids
/// are a topological order and backward walks them in reverse.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Leaf that never receives a gradient (data, labels).
  Var constant(Tensor value);
  /// Leaf that receives a gradient (parameters, or inputs under test).
  Var variable(Tensor value, std::string name = {});

  /// Appends an operation node. The backward function is dropped when no
  /// input requires a gradient.
  Var record(std::string op, std::span<const Var> inputs, Tensor value, BackwardFn backward);
  Var record(std::string op, std::initializer_list<Var> inputs, Tensor value,
             BackwardFn backward) {
    return record(std::move(op), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(value), std::move(backward));
  }

  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  const std::string& op(NodeId id) const { return nodes_.at(id).op; }
  const std::string& name(NodeId id) const { return nodes_.at(id).name; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Reverse-mode pass from a scalar node. Gradients accumulate additively
  /// across fan-out. Throws ContractError if the loss is not a scalar.
  Gradients backward(Var loss) const;

 private:
  struct Node {
    std::string op;
    std::string name;
    std::vector<NodeId> inputs;
    Tensor value;
    BackwardFn backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Operations. Shapes are row-major; image batches are [N x C x H x W] and a
// single image may be passed as [C x H x W].
// ---------------------------------------------------------------------------

/// x[m x n] * W[n x k] + b[k].
Var affine(Var x, Var W, Var b);
Var matmul(Var a, Var b);
/// 2D cross-correlation with kernels[c_out x c_in x kh x kw], no bias.
Var conv2d(Var x, Var kernels, int stride, int pad);
/// Adds b[c] to every spatial position of channel c.
Var add_channel_bias(Var x, Var b);
/// max(0, x); the subgradient at 0 is 0.
Var relu(Var x);
/// 2x2 non-overlapping max pool. Ties route the gradient to the first
/// element in scan order.
Var maxpool2(Var x);
Var reshape(Var x, Shape shape);
/// Collapses everything after the first axis.
Var flatten(Var x);
/// Row-wise softmax over the last axis of a 2D tensor.
Var softmax(Var logits);
/// Identity forward; backward multiplies the gradient by cfg.phi.
Var grl(Var x, const GrlConfig& cfg);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var x, double c);
Var sum(Var x);
Var sum_squares(Var x);
/// Gathers rows of a 2D tensor; backward scatters.
Var select_rows(Var x, std::vector<std::size_t> rows);

/// Central-difference gradient of a scalar function.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double eps);

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|): error relative to the
/// gradient's scale. Zero when both tensors are zero.
double max_relative_error(const Tensor& a, const Tensor& b);

}  // namespace smokeda
