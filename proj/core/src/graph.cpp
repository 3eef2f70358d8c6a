// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "ecbm/error.hpp"

namespace ecbm::diff {
namespace {

constexpr double kNormEpsilon = 1e-12;

std::size_t rows_of(const Shape& s) {
  if (s.size() < 2) return 1;
  return shape_size(Shape(s.begin(), s.end() - 1));
}

std::size_t cols_of(const Shape& s) {
  if (s.empty()) return 1;
  return s.back();
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;
  std::size_t a_index(std::size_t r, std::size_t c) const {
    return (ar == 1 ? 0 : r) * ac + (ac == 1 ? 0 : c);
  }
  std::size_t b_index(std::size_t r, std::size_t c) const {
    return (br == 1 ? 0 : r) * bc + (bc == 1 ? 0 : c);
  }
};

Broadcast broadcast(const Shape& a, const Shape& b) {
  Broadcast bc{0, 0, rows_of(a), cols_of(a), rows_of(b), cols_of(b)};
  auto join = [](std::size_t x, std::size_t y, std::size_t& out) {
    if (x == y || y == 1) {
      out = x;
    } else if (x == 1) {
      out = y;
    } else {
      return false;
    }
    return true;
  };
  if (!join(bc.ar, bc.br, bc.rows) || !join(bc.ac, bc.bc, bc.cols)) {
    throw ShapeError("cannot broadcast " + shape_string(a) + " with " +
                     shape_string(b));
  }
  return bc;
}

// Per-evaluation state: node values plus dropout masks.
struct Tape {
  std::vector<DenseArray> values;
  std::vector<DenseArray> masks;
};

const DenseArray& bound_leaf(const Node& node, std::size_t index,
                             const Bindings& bindings) {
  const DenseArray* value = bindings.find(node.name);
  if (value == nullptr) {
    throw InvalidArgument("unbound " +
                          std::string(op_name(node.op)) + " '" + node.name +
                          "' (node " + std::to_string(index) + ")");
  }
  if (value->size() != shape_size(node.shape) ||
      value->cols() != cols_of(node.shape)) {
    throw ShapeError("binding '" + node.name + "' has shape " +
                     shape_string(value->shape()) + ", graph expects " +
                     shape_string(node.shape));
  }
  return *value;
}

void forward_node(const Graph& graph, std::size_t index,
                  const Bindings& bindings, const EvalOptions& options,
                  Tape& tape) {
  const Node& node = graph.nodes()[index];
  auto in = [&](std::size_t k) -> const DenseArray& {
    return tape.values[node.inputs[k].index];
  };
  DenseArray out(node.shape);
  auto o = out.values();
  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kParameter:
      out = bound_leaf(node, index, bindings).reshaped(node.shape);
      break;
    case OpKind::kConstant:
      out = node.constant;
      break;
    case OpKind::kMatMul: {
      const DenseArray& a = in(0);
      const DenseArray& b = in(1);
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = a[i * k + p];
          if (aip == 0.0) continue;
          const double* brow = &b.values()[p * m];
          double* orow = &o[i * m];
          for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
        }
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const DenseArray& a = in(0);
      const DenseArray& b = in(1);
      const Broadcast bc = broadcast(a.shape(), b.shape());
      for (std::size_t r = 0; r < bc.rows; ++r) {
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const double x = a[bc.a_index(r, c)];
          const double y = b[bc.b_index(r, c)];
          double& z = o[r * bc.cols + c];
          if (node.op == OpKind::kAdd) {
            z = x + y;
          } else if (node.op == OpKind::kSub) {
            z = x - y;
          } else {
            z = x * y;
          }
        }
      }
      break;
    }
    case OpKind::kScale:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = node.scalar * in(0)[i];
      break;
    case OpKind::kAddScalar:
      for (std::size_t i = 0; i < o.size(); ++i) o[i] = in(0)[i] + node.scalar;
      break;
    case OpKind::kRelu:
      for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = in(0)[i] > 0.0 ? in(0)[i] : 0.0;
      }
      break;
    case OpKind::kSigmoid:
      for (std::size_t i = 0; i < o.size(); ++i) {
        const double x = in(0)[i];
        if (x >= 0.0) {
          o[i] = 1.0 / (1.0 + std::exp(-x));
        } else {
          const double e = std::exp(x);
          o[i] = e / (1.0 + e);
        }
      }
      break;
    case OpKind::kSoftmax: {
      const DenseArray& a = in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &a.values()[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          o[r * cols + c] = std::exp(x[c] - mx);
          total += o[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] /= total;
      }
      break;
    }
    case OpKind::kLogSumExp: {
      const DenseArray& a = in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* x = &a.values()[r * cols];
        const double mx = *std::max_element(x, x + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += std::exp(x[c] - mx);
        o[r] = mx + std::log(total);
      }
      break;
    }
    case OpKind::kL2Normalize: {
      const DenseArray& a = in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          sq += a[r * cols + c] * a[r * cols + c];
        }
        const double norm = std::max(std::sqrt(sq), kNormEpsilon);
        for (std::size_t c = 0; c < cols; ++c) {
          o[r * cols + c] = a[r * cols + c] / norm;
        }
      }
      break;
    }
    case OpKind::kDropout: {
      const DenseArray& a = in(0);
      if (!options.training || node.scalar == 0.0) {
        out = a;
        break;
      }
      std::mt19937_64 rng(options.seed ^
                          (0x9E3779B97F4A7C15ULL * (index + 1)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      DenseArray mask(node.shape);
      const double keep = 1.0 / (1.0 - node.scalar);
      for (std::size_t i = 0; i < o.size(); ++i) {
        mask[i] = unit(rng) < node.scalar ? 0.0 : keep;
        o[i] = a[i] * mask[i];
      }
      tape.masks[index] = std::move(mask);
      break;
    }
    case OpKind::kEmbedMix: {
      const DenseArray& w = in(0);
      const DenseArray& pos = in(1);
      const DenseArray& neg = in(2);
      const std::size_t rows = w.rows(), k = w.cols(), d = pos.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const double t = w[r * k + j];
          double* dst = &o[(r * k + j) * d];
          for (std::size_t c = 0; c < d; ++c) {
            dst[c] = t * pos[j * d + c] + (1.0 - t) * neg[j * d + c];
          }
        }
      }
      break;
    }
    case OpKind::kConcat: {
      const DenseArray& a = in(0);
      const DenseArray& b = in(1);
      const std::size_t rows = a.rows(), ca = a.cols(), cb = b.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(&a.values()[r * ca], ca, &o[r * (ca + cb)]);
        std::copy_n(&b.values()[r * cb], cb, &o[r * (ca + cb) + ca]);
      }
      break;
    }
    case OpKind::kSumLast: {
      const DenseArray& a = in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += a[r * cols + c];
        o[r] = total;
      }
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      const DenseArray& a = in(0);
      double total = 0.0;
      for (double v : a.values()) total += v;
      o[0] = node.op == OpKind::kMean ? total / static_cast<double>(a.size())
                                      : total;
      break;
    }
    case OpKind::kRepeatRows: {
      const DenseArray& a = in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < node.count; ++t) {
          std::copy_n(&a.values()[r * cols], cols,
                      &o[(r * node.count + t) * cols]);
        }
      }
      break;
    }
    case OpKind::kTileRows: {
      const DenseArray& a = in(0);
      for (std::size_t t = 0; t < node.count; ++t) {
        std::copy(a.values().begin(), a.values().end(),
                  o.begin() + static_cast<std::ptrdiff_t>(t * a.size()));
      }
      break;
    }
    case OpKind::kReshape:
      out = in(0).reshaped(node.shape);
      break;
  }
  if (!out.all_finite()) {
    throw NumericalError("non-finite value at node " + std::to_string(index) +
                         " (" + std::string(op_name(node.op)) + ")");
  }
  tape.values[index] = std::move(out);
}

Tape run_forward(const Graph& graph, const Bindings& bindings,
                 const EvalOptions& options) {
  Tape tape;
  tape.values.resize(graph.nodes().size());
  tape.masks.resize(graph.nodes().size());
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    forward_node(graph, i, bindings, options, tape);
  }
  return tape;
}

void accumulate(DenseArray& target, const DenseArray& delta) {
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += delta[i];
}

// Propagates grads[index] into the grads of the node's inputs.
void backward_node(const Graph& graph, std::size_t index, const Tape& tape,
                   std::vector<DenseArray>& grads) {
  const Node& node = graph.nodes()[index];
  const DenseArray& g = grads[index];
  const DenseArray& out = tape.values[index];
  auto in = [&](std::size_t k) -> const DenseArray& {
    return tape.values[node.inputs[k].index];
  };
  auto grad_in = [&](std::size_t k) -> DenseArray& {
    return grads[node.inputs[k].index];
  };
  switch (node.op) {
    case OpKind::kInput:
    case OpKind::kParameter:
    case OpKind::kConstant:
      break;
    case OpKind::kMatMul: {
      const DenseArray& a = in(0);
      const DenseArray& b = in(1);
      DenseArray& ga = grad_in(0);
      DenseArray& gb = grad_in(1);
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = &g.values()[i * m];
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = &b.values()[p * m];
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
          const double aip = a[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = &gb.values()[p * m];
          for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
        }
      }
      break;
    }
    case OpKind::kAdd:
    case OpKind::kSub:
    case OpKind::kMul: {
      const DenseArray& a = in(0);
      const DenseArray& b = in(1);
      DenseArray& ga = grad_in(0);
      DenseArray& gb = grad_in(1);
      const Broadcast bc = broadcast(a.shape(), b.shape());
      for (std::size_t r = 0; r < bc.rows; ++r) {
        for (std::size_t c = 0; c < bc.cols; ++c) {
          const double gv = g[r * bc.cols + c];
          const std::size_t ia = bc.a_index(r, c);
          const std::size_t ib = bc.b_index(r, c);
          if (node.op == OpKind::kAdd) {
            ga[ia] += gv;
            gb[ib] += gv;
          } else if (node.op == OpKind::kSub) {
            ga[ia] += gv;
            gb[ib] -= gv;
          } else {
            ga[ia] += gv * b[ib];
            gb[ib] += gv * a[ia];
          }
        }
      }
      break;
    }
    case OpKind::kScale: {
      DenseArray& ga = grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += node.scalar * g[i];
      break;
    }
    case OpKind::kAddScalar:
    case OpKind::kReshape:
      accumulate(grad_in(0), g);
      break;
    case OpKind::kRelu: {
      DenseArray& ga = grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (in(0)[i] > 0.0) ga[i] += g[i];
      }
      break;
    }
    case OpKind::kSigmoid: {
      DenseArray& ga = grad_in(0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * out[i] * (1.0 - out[i]);
      }
      break;
    }
    case OpKind::kSoftmax: {
      DenseArray& ga = grad_in(0);
      const std::size_t rows = out.rows(), cols = out.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          dot += g[r * cols + c] * out[r * cols + c];
        }
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += out[r * cols + c] * (g[r * cols + c] - dot);
        }
      }
      break;
    }
    case OpKind::kLogSumExp: {
      const DenseArray& a = in(0);
      DenseArray& ga = grad_in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          ga[r * cols + c] += g[r] * std::exp(a[r * cols + c] - out[r]);
        }
      }
      break;
    }
    case OpKind::kL2Normalize: {
      const DenseArray& a = in(0);
      DenseArray& ga = grad_in(0);
      const std::size_t rows = a.rows(), cols = a.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
          sq += a[r * cols + c] * a[r * cols + c];
        }
        const double norm = std::sqrt(sq);
        if (norm > kNormEpsilon) {
          double dot = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            dot += out[r * cols + c] * g[r * cols + c];
          }
          for (std::size_t c = 0; c < cols; ++c) {
            ga[r * cols + c] +=
                (g[r * cols + c] - out[r * cols + c] * dot) / norm;
          }
        } else {
          for (std::size_t c = 0; c < cols; ++c) {
            ga[r * cols + c] += g[r * cols + c] / kNormEpsilon;
          }
        }
      }
      break;
    }
    case OpKind::kDropout: {
      DenseArray& ga = grad_in(0);
      const DenseArray& mask = tape.masks[index];
      if (mask.size() == 0) {
        accumulate(ga, g);
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
      }
      break;
    }
    case OpKind::kEmbedMix: {
      const DenseArray& w = in(0);
      const DenseArray& pos = in(1);
      const DenseArray& neg = in(2);
      DenseArray& gw = grad_in(0);
      DenseArray& gp = grad_in(1);
      DenseArray& gn = grad_in(2);
      const std::size_t rows = w.rows(), k = w.cols(), d = pos.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          const double t = w[r * k + j];
          const double* gr = &g.values()[(r * k + j) * d];
          double acc = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            acc += gr[c] * (pos[j * d + c] - neg[j * d + c]);
            gp[j * d + c] += t * gr[c];
            gn[j * d + c] += (1.0 - t) * gr[c];
          }
          gw[r * k + j] += acc;
        }
      }
      break;
    }
    case OpKind::kConcat: {
      DenseArray& ga = grad_in(0);
      DenseArray& gb = grad_in(1);
      const std::size_t rows = ga.rows(), ca = ga.cols(), cb = gb.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < ca; ++c) {
          ga[r * ca + c] += g[r * (ca + cb) + c];
        }
        for (std::size_t c = 0; c < cb; ++c) {
          gb[r * cb + c] += g[r * (ca + cb) + ca + c];
        }
      }
      break;
    }
    case OpKind::kSumLast: {
      DenseArray& ga = grad_in(0);
      const std::size_t rows = ga.rows(), cols = ga.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
      }
      break;
    }
    case OpKind::kSum:
    case OpKind::kMean: {
      DenseArray& ga = grad_in(0);
      const double factor =
          node.op == OpKind::kMean ? g[0] / static_cast<double>(ga.size())
                                   : g[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor;
      break;
    }
    case OpKind::kRepeatRows: {
      DenseArray& ga = grad_in(0);
      const std::size_t rows = ga.rows(), cols = ga.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < node.count; ++t) {
          for (std::size_t c = 0; c < cols; ++c) {
            ga[r * cols + c] += g[(r * node.count + t) * cols + c];
          }
        }
      }
      break;
    }
    case OpKind::kTileRows: {
      DenseArray& ga = grad_in(0);
      for (std::size_t t = 0; t < node.count; ++t) {
        for (std::size_t i = 0; i < ga.size(); ++i) {
          ga[i] += g[t * ga.size() + i];
        }
      }
      break;
    }
  }
}

bool is_leaf(OpKind op) {
  return op == OpKind::kInput || op == OpKind::kParameter;
}

}  // namespace

std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kConstant: return "constant";
    case OpKind::kMatMul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kAddScalar: return "add_scalar";
    case OpKind::kRelu: return "relu";
    case OpKind::kSigmoid: return "sigmoid";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kLogSumExp: return "log_sum_exp";
    case OpKind::kL2Normalize: return "l2_normalize";
    case OpKind::kDropout: return "dropout";
    case OpKind::kEmbedMix: return "embed_mix";
    case OpKind::kConcat: return "concat";
    case OpKind::kSumLast: return "sum_last";
    case OpKind::kSum: return "sum";
    case OpKind::kMean: return "mean";
    case OpKind::kRepeatRows: return "repeat_rows";
    case OpKind::kTileRows: return "tile_rows";
    case OpKind::kReshape: return "reshape";
  }
  return "unknown";
}

NodeId Graph::push(Node node) {
  for (NodeId in : node.inputs) {
    if (in.index >= nodes_.size()) {
      throw InvalidArgument("node input refers to a later node");
    }
  }
  nodes_.push_back(std::move(node));
  return NodeId{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

NodeId Graph::leaf_node(OpKind op, std::string name, Shape shape) {
  if (leaves_.contains(name)) {
    throw InvalidArgument("duplicate leaf name '" + name + "'");
  }
  Node node{op, {}, std::move(shape), name};
  const NodeId id = push(std::move(node));
  leaves_.emplace(std::move(name), id);
  return id;
}

NodeId Graph::input(std::string name, Shape shape) {
  return leaf_node(OpKind::kInput, std::move(name), std::move(shape));
}

NodeId Graph::parameter(std::string name, Shape shape) {
  return leaf_node(OpKind::kParameter, std::move(name), std::move(shape));
}

NodeId Graph::constant(DenseArray value) {
  Node node{OpKind::kConstant, {}, value.shape()};
  node.constant = std::move(value);
  return push(std::move(node));
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (cols_of(sa) != rows_of(sb)) {
    throw ShapeError("matmul " + shape_string(sa) + " x " + shape_string(sb));
  }
  return push(Node{OpKind::kMatMul, {a, b}, {rows_of(sa), cols_of(sb)}});
}

NodeId Graph::elementwise(OpKind op, NodeId a, NodeId b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  const Broadcast bc = broadcast(sa, sb);
  Shape out;
  if (sa == sb) {
    out = sa;
  } else if (rows_of(sa) == bc.rows && cols_of(sa) == bc.cols) {
    out = sa;
  } else if (rows_of(sb) == bc.rows && cols_of(sb) == bc.cols) {
    out = sb;
  } else {
    out = {bc.rows, bc.cols};
  }
  return push(Node{op, {a, b}, std::move(out)});
}

NodeId Graph::unary(OpKind op, NodeId a) {
  return push(Node{op, {a}, shape(a)});
}

NodeId Graph::add(NodeId a, NodeId b) { return elementwise(OpKind::kAdd, a, b); }
NodeId Graph::sub(NodeId a, NodeId b) { return elementwise(OpKind::kSub, a, b); }
NodeId Graph::mul(NodeId a, NodeId b) { return elementwise(OpKind::kMul, a, b); }

NodeId Graph::scale(NodeId a, double factor) {
  Node node{OpKind::kScale, {a}, shape(a)};
  node.scalar = factor;
  return push(std::move(node));
}

NodeId Graph::add_scalar(NodeId a, double value) {
  Node node{OpKind::kAddScalar, {a}, shape(a)};
  node.scalar = value;
  return push(std::move(node));
}

NodeId Graph::relu(NodeId a) { return unary(OpKind::kRelu, a); }
NodeId Graph::sigmoid(NodeId a) { return unary(OpKind::kSigmoid, a); }
NodeId Graph::softmax(NodeId a) { return unary(OpKind::kSoftmax, a); }
NodeId Graph::l2_normalize(NodeId a) { return unary(OpKind::kL2Normalize, a); }

NodeId Graph::log_sum_exp(NodeId a) {
  return push(Node{OpKind::kLogSumExp, {a}, {rows_of(shape(a)), 1}});
}

NodeId Graph::dropout(NodeId a, double rate) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw InvalidArgument("dropout rate must lie in [0, 1)");
  }
  Node node{OpKind::kDropout, {a}, shape(a)};
  node.scalar = rate;
  return push(std::move(node));
}

NodeId Graph::embed_mix(NodeId weights, NodeId pos, NodeId neg) {
  const Shape& sw = shape(weights);
  const Shape& sp = shape(pos);
  const Shape& sn = shape(neg);
  if (rows_of(sp) != cols_of(sw) || sp != sn) {
    throw ShapeError("embed_mix weights " + shape_string(sw) + ", pos " +
                     shape_string(sp) + ", neg " + shape_string(sn));
  }
  return push(Node{OpKind::kEmbedMix,
                   {weights, pos, neg},
                   {rows_of(sw) * cols_of(sw), cols_of(sp)}});
}

NodeId Graph::concat(NodeId a, NodeId b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (rows_of(sa) != rows_of(sb)) {
    throw ShapeError("concat " + shape_string(sa) + " with " +
                     shape_string(sb));
  }
  return push(
      Node{OpKind::kConcat, {a, b}, {rows_of(sa), cols_of(sa) + cols_of(sb)}});
}

NodeId Graph::sum_last(NodeId a) {
  return push(Node{OpKind::kSumLast, {a}, {rows_of(shape(a)), 1}});
}

NodeId Graph::sum(NodeId a) { return push(Node{OpKind::kSum, {a}, {1}}); }
NodeId Graph::mean(NodeId a) { return push(Node{OpKind::kMean, {a}, {1}}); }

NodeId Graph::repeat_rows(NodeId a, std::size_t times) {
  const Shape& s = shape(a);
  Node node{OpKind::kRepeatRows, {a}, {rows_of(s) * times, cols_of(s)}};
  node.count = times;
  return push(std::move(node));
}

NodeId Graph::tile_rows(NodeId a, std::size_t times) {
  const Shape& s = shape(a);
  Node node{OpKind::kTileRows, {a}, {rows_of(s) * times, cols_of(s)}};
  node.count = times;
  return push(std::move(node));
}

NodeId Graph::reshape(NodeId a, Shape new_shape) {
  if (shape_size(new_shape) != shape_size(shape(a))) {
    throw ShapeError("reshape " + shape_string(shape(a)) + " to " +
                     shape_string(new_shape));
  }
  return push(Node{OpKind::kReshape, {a}, std::move(new_shape)});
}

void Graph::mark_output(std::string name, NodeId id) {
  if (id.index >= nodes_.size()) throw InvalidArgument("unknown node");
  outputs_[std::move(name)] = id;
}

NodeId Graph::output(std::string_view name) const {
  auto it = outputs_.find(std::string(name));
  if (it == outputs_.end()) {
    throw InvalidArgument("graph has no output '" + std::string(name) + "'");
  }
  return it->second;
}

std::optional<NodeId> Graph::leaf(std::string_view name) const {
  auto it = leaves_.find(std::string(name));
  if (it == leaves_.end()) return std::nullopt;
  return it->second;
}

Bindings& Bindings::bind(const std::string& name, const DenseArray& value) {
  bound_[name] = &value;
  return *this;
}

const DenseArray* Bindings::find(const std::string& name) const {
  auto it = bound_.find(name);
  return it == bound_.end() ? nullptr : it->second;
}

std::vector<std::string> Bindings::names() const {
  std::vector<std::string> out;
  out.reserve(bound_.size());
  for (const auto& [name, _] : bound_) out.push_back(name);
  return out;
}

NamedArrays evaluate(const Graph& graph, const Bindings& bindings,
                     const EvalOptions& options) {
  Tape tape = run_forward(graph, bindings, options);
  NamedArrays out;
  for (const auto& [name, id] : graph.outputs()) {
    out.emplace(name, tape.values[id.index]);
  }
  return out;
}

GradientResult gradient(const Graph& graph, const Bindings& bindings,
                        std::string_view output, const EvalOptions& options) {
  const Shape& s = graph.shape(graph.output(output));
  if (shape_size(s) != 1) {
    throw ShapeError("gradient without seed needs a scalar output, '" +
                     std::string(output) + "' is " + shape_string(s));
  }
  return gradient(graph, bindings, output, DenseArray(s, 1.0), options);
}

GradientResult gradient(const Graph& graph, const Bindings& bindings,
                        std::string_view output, const DenseArray& seed,
                        const EvalOptions& options) {
  const NodeId target = graph.output(output);
  if (seed.size() != shape_size(graph.shape(target))) {
    throw ShapeError("seed shape " + shape_string(seed.shape()) +
                     " does not match output " +
                     shape_string(graph.shape(target)));
  }
  Tape tape = run_forward(graph, bindings, options);
  std::vector<DenseArray> grads;
  grads.reserve(graph.nodes().size());
  for (const Node& node : graph.nodes()) grads.emplace_back(node.shape);
  grads[target.index] = seed.reshaped(graph.shape(target));
  for (std::size_t i = target.index + 1; i-- > 0;) {
    backward_node(graph, i, tape, grads);
  }
  GradientResult result;
  for (const auto& [name, id] : graph.outputs()) {
    result.outputs.emplace(name, tape.values[id.index]);
  }
  for (std::size_t i = 0; i < graph.nodes().size(); ++i) {
    const Node& node = graph.nodes()[i];
    if (is_leaf(node.op)) result.gradients.emplace(node.name, grads[i]);
  }
  return result;
}

double check_gradient(const Graph& graph, const Bindings& point,
                      std::string_view output, double step,
                      const std::vector<std::string>& wrt,
                      const EvalOptions& options) {
  if (!(step > 0.0)) throw InvalidArgument("check_gradient: step must be > 0");
  const NodeId target = graph.output(output);
  const DenseArray seed(graph.shape(target), 1.0);
  const GradientResult analytic =
      gradient(graph, point, output, seed, options);

  auto total = [&](const Bindings& b) {
    const NamedArrays out = evaluate(graph, b, options);
    double s = 0.0;
    for (double v : out.at(std::string(output)).values()) s += v;
    return s;
  };

  std::vector<std::string> names = wrt;
  if (names.empty()) {
    for (const Node& node : graph.nodes()) {
      if (is_leaf(node.op)) names.push_back(node.name);
    }
  }
  double worst = 0.0;
  for (const std::string& name : names) {
    const DenseArray* base = point.find(name);
    if (base == nullptr || !graph.leaf(name)) {
      throw InvalidArgument("check_gradient: '" + name + "' is not a bound leaf");
    }
    DenseArray probe = *base;
    Bindings shifted = point;
    shifted.bind(name, probe);
    const DenseArray& g = analytic.gradients.at(name);
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const double original = probe[i];
      probe[i] = original + step;
      const double up = total(shifted);
      probe[i] = original - step;
      const double down = total(shifted);
      probe[i] = original;
      const double numeric = (up - down) / (2.0 * step);
      const double err =
          std::abs(g[i] - numeric) / std::max(1.0, std::abs(g[i]));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace ecbm::diff
