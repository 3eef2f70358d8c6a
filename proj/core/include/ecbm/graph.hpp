// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Reverse-mode differentiation over a static graph of dense matrix ops.
//
// A Graph is built once, then evaluated any number of times against a set of
// bindings (named input and parameter arrays). Every op views its operands as
// row-major matrices; see DenseArray for the rows/cols convention. Nodes are
// appended in topological order, so the node list is the evaluation order.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ecbm/array.hpp"

namespace ecbm::diff {

struct NodeId {
  std::uint32_t index = 0;
  friend bool operator==(NodeId, NodeId) = default;
};

enum class OpKind {
  kInput,
  kParameter,
  kConstant,
  kMatMul,
  kAdd,
  kSub,
  kMul,
  kScale,
  kAddScalar,
  kRelu,
  kSigmoid,
  kSoftmax,
  kLogSumExp,
  kL2Normalize,
  kDropout,
  kEmbedMix,
  kConcat,
  kSumLast,
  kSum,
  kMean,
  kRepeatRows,
  kTileRows,
  kReshape,
};

std::string_view op_name(OpKind op);

struct Node {
  OpKind op = OpKind::kConstant;
  std::vector<NodeId> inputs{};
  Shape shape{};
  std::string name{};     // leaves only
  double scalar = 0.0;    // scale factor, added constant, dropout rate
  std::size_t count = 0;  // repeat/tile multiplicity
  DenseArray constant{};  // kConstant payload
};

class Graph {
 public:
  NodeId input(std::string name, Shape shape);
  NodeId parameter(std::string name, Shape shape);
  NodeId constant(DenseArray value);

  NodeId matmul(NodeId a, NodeId b);
  // Elementwise binary ops broadcast any operand whose row or column count
  // is 1 against the other.
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  NodeId add_scalar(NodeId a, double value);
  NodeId relu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId softmax(NodeId a);
  /// Row-wise log-sum-exp, output is rows x 1.
  NodeId log_sum_exp(NodeId a);
  /// Row-wise x / max(|x|_2, 1e-12).
  NodeId l2_normalize(NodeId a);
  /// Inverted dropout; identity unless EvalOptions::training is set.
  NodeId dropout(NodeId a, double rate);
  /// weights (r x K), pos (K x d), neg (K x d) -> (r*K) x d with row (i, k)
  /// equal to w_ik * pos_k + (1 - w_ik) * neg_k.
  NodeId embed_mix(NodeId weights, NodeId pos, NodeId neg);
  /// Concatenation along the last axis.
  NodeId concat(NodeId a, NodeId b);
  /// Row-wise sum, output is rows x 1.
  NodeId sum_last(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  /// Each row repeated `times` times consecutively.
  NodeId repeat_rows(NodeId a, std::size_t times);
  /// The whole matrix stacked `times` times.
  NodeId tile_rows(NodeId a, std::size_t times);
  NodeId reshape(NodeId a, Shape shape);

  void mark_output(std::string name, NodeId id);

  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& node(NodeId id) const { return nodes_.at(id.index); }
  const Shape& shape(NodeId id) const { return node(id).shape; }
  const std::map<std::string, NodeId>& outputs() const { return outputs_; }
  NodeId output(std::string_view name) const;
  std::optional<NodeId> leaf(std::string_view name) const;

 private:
  NodeId push(Node node);
  NodeId leaf_node(OpKind op, std::string name, Shape shape);
  NodeId elementwise(OpKind op, NodeId a, NodeId b);
  NodeId unary(OpKind op, NodeId a);

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> outputs_;
  std::unordered_map<std::string, NodeId> leaves_;
};

/// Non-owning name -> array map. Bound arrays must outlive every call that
/// uses the bindings.
class Bindings {
 public:
  Bindings& bind(const std::string& name, const DenseArray& value);
  const DenseArray* find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::map<std::string, const DenseArray*> bound_;
};

struct EvalOptions {
  bool training = false;
  std::uint64_t seed = 0;
};

using NamedArrays = std::map<std::string, DenseArray>;

/// Forward pass; returns every marked output.
NamedArrays evaluate(const Graph& graph, const Bindings& bindings,
                     const EvalOptions& options = {});

struct GradientResult {
  NamedArrays outputs;
  /// d(seed . output)/d(leaf) for every input and parameter leaf.
  NamedArrays gradients;
};

/// Reverse pass from a scalar output (implicit seed 1).
GradientResult gradient(const Graph& graph, const Bindings& bindings,
                        std::string_view output,
                        const EvalOptions& options = {});
/// Reverse pass with an explicit seed shaped like the output.
GradientResult gradient(const Graph& graph, const Bindings& bindings,
                        std::string_view output, const DenseArray& seed,
                        const EvalOptions& options = {});

/// Max over leaf coordinates of |analytic - central difference| /
/// max(1, |analytic|), for the sum of `output`. Only the leaves named in
/// `wrt` are perturbed; empty means every bound leaf.
double check_gradient(const Graph& graph, const Bindings& point,
                      std::string_view output, double step,
                      const std::vector<std::string>& wrt = {},
                      const EvalOptions& options = {});

}  // namespace ecbm::diff
