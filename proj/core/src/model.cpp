// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "ecbm/error.hpp"

namespace ecbm {

using diff::Graph;
using diff::NodeId;

void ModelConfig::validate() const {
  if (num_concepts < 1) throw InvalidArgument("model: need at least 1 concept");
  if (num_classes < 2) throw InvalidArgument("model: need at least 2 classes");
  if (feature_dim < 1) throw InvalidArgument("model: feature_dim must be >= 1");
  if (embed_dim < 1) throw InvalidArgument("model: embed_dim must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw InvalidArgument("model: dropout must lie in [0, 1)");
  }
  for (double l : {lambda_concept, lambda_global, lambda_concept_inf,
                   lambda_global_inf}) {
    if (!(l >= 0.0) || !std::isfinite(l)) {
      throw InvalidArgument("model: energy weights must be finite and >= 0");
    }
  }
}

namespace {

struct ParamSpec {
  const char* name;
  diff::Shape shape;
  std::size_t fan_in;  // 0 marks an embedding table
};

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  const std::size_t k = c.num_concepts, m = c.num_classes, f = c.feature_dim;
  const std::size_t h = c.hidden_dim(), d = c.embed_dim;
  return {
      {params::kFeatureW1, {f, h}, f},
      {params::kFeatureB1, {1, h}, f},
      {params::kFeatureW2, {h, h}, h},
      {params::kFeatureB2, {1, h}, h},
      {params::kClassEmbed, {m, d}, 0},
      {params::kConceptPos, {k, d}, 0},
      {params::kConceptNeg, {k, d}, 0},
      {params::kClassFcW, {h, h}, h},
      {params::kClassFcB, {1, h}, h},
      {params::kClassOutW, {h, 1}, h},
      {params::kClassOutB, {1, 1}, h},
      {params::kConceptFcW, {h, h}, h},
      {params::kConceptFcB, {1, h}, h},
      {params::kConceptOutW, {h, 1}, h},
      {params::kConceptOutB, {1, 1}, h},
      {params::kGlobalProjW, {k * d, d}, k * d},
      {params::kGlobalProjB, {1, d}, k * d},
      {params::kGlobalOutW, {d, 1}, d},
      {params::kGlobalOutB, {1, 1}, d},
  };
}

DenseArray as_row(std::span<const double> v) {
  return DenseArray::row(std::vector<double>(v.begin(), v.end()));
}

}  // namespace

Theta::Theta(ModelConfig config) : config_(config) {
  config_.validate();
  for (const ParamSpec& spec : param_specs(config_)) {
    params_.emplace(spec.name, DenseArray(spec.shape));
  }
}

Theta Theta::initialize(const ModelConfig& config, std::uint64_t seed) {
  Theta theta(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Specs are visited in declaration order so the draw sequence is stable.
  for (const ParamSpec& spec : param_specs(config)) {
    DenseArray& p = theta.param(spec.name);
    if (spec.fan_in == 0) {
      for (double& v : p.values()) v = 0.01 * normal(rng);
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.fan_in));
      std::uniform_real_distribution<double> uni(-bound, bound);
      for (double& v : p.values()) v = uni(rng);
    }
  }
  return theta;
}

void Theta::set_lambdas(double concept_w, double global_w, double concept_inf,
                        double global_inf) {
  ModelConfig next = config_;
  next.lambda_concept = concept_w;
  next.lambda_global = global_w;
  next.lambda_concept_inf = concept_inf;
  next.lambda_global_inf = global_inf;
  next.validate();
  config_ = next;
}

DenseArray& Theta::param(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter " + name);
  return it->second;
}

const DenseArray& Theta::param(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter " + name);
  return it->second;
}

void Theta::bind(diff::Bindings& bindings) const {
  for (const auto& [name, value] : params_) bindings.bind(name, value);
}

bool Theta::all_finite() const {
  return std::all_of(params_.begin(), params_.end(),
                     [](const auto& kv) { return kv.second.all_finite(); });
}

EnergyGraphBuilder::EnergyGraphBuilder(Graph& graph, const ModelConfig& config)
    : graph_(graph), config_(config) {
  config_.validate();
  std::map<std::string, NodeId> ids;
  for (const ParamSpec& spec : param_specs(config_)) {
    ids[spec.name] = graph_.parameter(spec.name, spec.shape);
  }
  feature_w1_ = ids[params::kFeatureW1];
  feature_b1_ = ids[params::kFeatureB1];
  feature_w2_ = ids[params::kFeatureW2];
  feature_b2_ = ids[params::kFeatureB2];
  class_embed_ = ids[params::kClassEmbed];
  concept_pos_ = ids[params::kConceptPos];
  concept_neg_ = ids[params::kConceptNeg];
  class_fc_w_ = ids[params::kClassFcW];
  class_fc_b_ = ids[params::kClassFcB];
  class_out_w_ = ids[params::kClassOutW];
  class_out_b_ = ids[params::kClassOutB];
  concept_fc_w_ = ids[params::kConceptFcW];
  concept_fc_b_ = ids[params::kConceptFcB];
  concept_out_w_ = ids[params::kConceptOutW];
  concept_out_b_ = ids[params::kConceptOutB];
  global_proj_w_ = ids[params::kGlobalProjW];
  global_proj_b_ = ids[params::kGlobalProjB];
  global_out_w_ = ids[params::kGlobalOutW];
  global_out_b_ = ids[params::kGlobalOutB];
}

NodeId EnergyGraphBuilder::features(NodeId x) {
  Graph& g = graph_;
  NodeId h = g.relu(g.add(g.matmul(x, feature_w1_), feature_b1_));
  return g.add(g.matmul(h, feature_w2_), feature_b2_);
}

// relu(a * e + a) . out_w + out_b, where a and e are row-aligned.
NodeId EnergyGraphBuilder::head(NodeId mixed_in, NodeId normalized_embed,
                                NodeId out_w, NodeId out_b) {
  Graph& g = graph_;
  NodeId gated = g.add(g.mul(mixed_in, normalized_embed), mixed_in);
  return g.add(g.matmul(g.relu(gated), out_w), out_b);
}

NodeId EnergyGraphBuilder::class_energies_all(NodeId z) {
  Graph& g = graph_;
  const std::size_t rows = diff::shape_size(g.shape(z)) / config_.hidden_dim();
  const std::size_t m = config_.num_classes;
  NodeId hidden =
      g.dropout(g.add(g.matmul(z, class_fc_w_), class_fc_b_), config_.dropout);
  NodeId u = g.tile_rows(g.l2_normalize(class_embed_), rows);
  NodeId e = head(g.repeat_rows(hidden, m), u, class_out_w_, class_out_b_);
  return g.reshape(e, {rows, m});
}

NodeId EnergyGraphBuilder::class_energy(NodeId z, NodeId class_weights) {
  Graph& g = graph_;
  NodeId hidden =
      g.dropout(g.add(g.matmul(z, class_fc_w_), class_fc_b_), config_.dropout);
  NodeId u = g.l2_normalize(g.matmul(class_weights, class_embed_));
  return head(hidden, u, class_out_w_, class_out_b_);
}

NodeId EnergyGraphBuilder::concept_hidden(NodeId z) {
  Graph& g = graph_;
  return g.dropout(g.add(g.matmul(z, concept_fc_w_), concept_fc_b_),
                   config_.dropout);
}

NodeId EnergyGraphBuilder::concept_energies(NodeId z, NodeId concept_weights) {
  Graph& g = graph_;
  const std::size_t k = config_.num_concepts;
  const std::size_t rows = diff::shape_size(g.shape(z)) / config_.hidden_dim();
  NodeId v = g.l2_normalize(g.embed_mix(concept_weights, concept_pos_,
                                        concept_neg_));
  NodeId e = head(g.repeat_rows(concept_hidden(z), k), v, concept_out_w_,
                  concept_out_b_);
  return g.reshape(e, {rows, k});
}

std::array<NodeId, 2> EnergyGraphBuilder::concept_energies_both(NodeId z) {
  Graph& g = graph_;
  const std::size_t k = config_.num_concepts;
  const std::size_t rows = diff::shape_size(g.shape(z)) / config_.hidden_dim();
  NodeId hidden = g.repeat_rows(concept_hidden(z), k);
  std::array<NodeId, 2> out;
  const NodeId table[2] = {concept_neg_, concept_pos_};
  for (int bit = 0; bit < 2; ++bit) {
    NodeId v = g.tile_rows(g.l2_normalize(table[bit]), rows);
    out[bit] = g.reshape(head(hidden, v, concept_out_w_, concept_out_b_),
                         {rows, k});
  }
  return out;
}

NodeId EnergyGraphBuilder::projected_concepts(NodeId concept_weights) {
  Graph& g = graph_;
  const std::size_t rows = diff::shape_size(g.shape(concept_weights)) /
                           config_.num_concepts;
  NodeId mixed = g.embed_mix(concept_weights, concept_pos_, concept_neg_);
  NodeId flat =
      g.reshape(mixed, {rows, config_.num_concepts * config_.embed_dim});
  return g.l2_normalize(
      g.add(g.matmul(flat, global_proj_w_), global_proj_b_));
}

NodeId EnergyGraphBuilder::global_energy(NodeId concept_weights,
                                         NodeId class_weights) {
  Graph& g = graph_;
  NodeId v = projected_concepts(concept_weights);
  NodeId u = g.matmul(class_weights, class_embed_);
  return head(u, v, global_out_w_, global_out_b_);
}

NodeId EnergyGraphBuilder::global_energies_all(NodeId concept_weights) {
  Graph& g = graph_;
  const std::size_t rows = diff::shape_size(g.shape(concept_weights)) /
                           config_.num_concepts;
  const std::size_t m = config_.num_classes;
  NodeId v = g.repeat_rows(projected_concepts(concept_weights), m);
  NodeId u = g.tile_rows(class_embed_, rows);
  return g.reshape(head(u, v, global_out_w_, global_out_b_), {rows, m});
}

void check_class_weights(std::span<const double> w, std::size_t num_classes) {
  if (w.size() != num_classes) {
    throw ShapeError("class weights: expected " + std::to_string(num_classes) +
                     " entries, got " + std::to_string(w.size()));
  }
  double total = 0.0;
  for (double v : w) {
    if (!(v >= -1e-9) || !std::isfinite(v)) {
      throw InvalidArgument("class weights must be non-negative");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgument("class weights must sum to 1");
  }
}

void check_concept_weights(std::span<const double> w,
                           std::size_t num_concepts) {
  if (w.size() != num_concepts) {
    throw ShapeError("concept weights: expected " +
                     std::to_string(num_concepts) + " entries, got " +
                     std::to_string(w.size()));
  }
  for (double v : w) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw InvalidArgument("concept weights must lie in [0, 1]");
    }
  }
}

namespace {

void check_features(const Theta& theta, std::span<const double> x) {
  if (x.size() != theta.config().feature_dim) {
    throw ShapeError("features: expected " +
                     std::to_string(theta.config().feature_dim) +
                     " values, got " + std::to_string(x.size()));
  }
}

double evaluate_scalar(const Graph& graph, const diff::Bindings& bindings,
                       const char* output) {
  return diff::evaluate(graph, bindings).at(output)[0];
}

}  // namespace

std::vector<double> extract_features(const Theta& theta,
                                     std::span<const double> x) {
  check_features(theta, x);
  Graph g;
  EnergyGraphBuilder b(g, theta.config());
  NodeId in = g.input("x", {1, x.size()});
  g.mark_output("z", b.features(in));
  diff::Bindings bind;
  theta.bind(bind);
  const DenseArray xr = as_row(x);
  bind.bind("x", xr);
  return diff::evaluate(g, bind).at("z").data();
}

std::vector<double> concept_embedding(const Theta& theta, std::size_t k,
                                      double c) {
  if (k >= theta.config().num_concepts) {
    throw InvalidArgument("concept index " + std::to_string(k) +
                          " out of range");
  }
  if (!(c >= 0.0 && c <= 1.0)) {
    throw InvalidArgument("concept weight must lie in [0, 1]");
  }
  const std::size_t d = theta.config().embed_dim;
  const DenseArray& pos = theta.param(params::kConceptPos);
  const DenseArray& neg = theta.param(params::kConceptNeg);
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) {
    out[i] = c * pos[k * d + i] + (1.0 - c) * neg[k * d + i];
  }
  return out;
}

double class_energy(const Theta& theta, std::span<const double> x,
                    std::span<const double> class_weights) {
  check_features(theta, x);
  check_class_weights(class_weights, theta.config().num_classes);
  Graph g;
  EnergyGraphBuilder b(g, theta.config());
  NodeId xi = g.input("x", {1, x.size()});
  NodeId yi = g.input("y", {1, class_weights.size()});
  g.mark_output("e", b.class_energy(b.features(xi), yi));
  diff::Bindings bind;
  theta.bind(bind);
  const DenseArray xr = as_row(x), yr = as_row(class_weights);
  bind.bind("x", xr).bind("y", yr);
  return evaluate_scalar(g, bind, "e");
}

double concept_energy(const Theta& theta, std::span<const double> x,
                      std::size_t k, double c) {
  check_features(theta, x);
  const std::size_t kk = theta.config().num_concepts;
  if (k >= kk) {
    throw InvalidArgument("concept index " + std::to_string(k) +
                          " out of range");
  }
  if (!(c >= 0.0 && c <= 1.0)) {
    throw InvalidArgument("concept weight must lie in [0, 1]");
  }
  // Other concepts are evaluated too (at 0); only column k is read.
  std::vector<double> w(kk, 0.0);
  w[k] = c;
  Graph g;
  EnergyGraphBuilder b(g, theta.config());
  NodeId xi = g.input("x", {1, x.size()});
  NodeId ci = g.input("c", {1, kk});
  g.mark_output("e", b.concept_energies(b.features(xi), ci));
  diff::Bindings bind;
  theta.bind(bind);
  const DenseArray xr = as_row(x), cr = DenseArray::row(w);
  bind.bind("x", xr).bind("c", cr);
  return diff::evaluate(g, bind).at("e")[k];
}

double global_energy(const Theta& theta,
                     std::span<const double> concept_weights,
                     std::span<const double> class_weights) {
  check_concept_weights(concept_weights, theta.config().num_concepts);
  check_class_weights(class_weights, theta.config().num_classes);
  Graph g;
  EnergyGraphBuilder b(g, theta.config());
  NodeId ci = g.input("c", {1, concept_weights.size()});
  NodeId yi = g.input("y", {1, class_weights.size()});
  g.mark_output("e", b.global_energy(ci, yi));
  diff::Bindings bind;
  theta.bind(bind);
  const DenseArray cr = as_row(concept_weights), yr = as_row(class_weights);
  bind.bind("c", cr).bind("y", yr);
  return evaluate_scalar(g, bind, "e");
}

EnergyBreakdown joint_energy(const Theta& theta, std::span<const double> x,
                             std::span<const double> concept_weights,
                             std::span<const double> class_weights) {
  const ModelConfig& cfg = theta.config();
  check_features(theta, x);
  check_concept_weights(concept_weights, cfg.num_concepts);
  check_class_weights(class_weights, cfg.num_classes);
  Graph g;
  EnergyGraphBuilder b(g, cfg);
  NodeId xi = g.input("x", {1, x.size()});
  NodeId ci = g.input("c", {1, concept_weights.size()});
  NodeId yi = g.input("y", {1, class_weights.size()});
  NodeId z = b.features(xi);
  g.mark_output("class", b.class_energy(z, yi));
  g.mark_output("concept", b.concept_energies(z, ci));
  g.mark_output("global", b.global_energy(ci, yi));
  diff::Bindings bind;
  theta.bind(bind);
  const DenseArray xr = as_row(x), cr = as_row(concept_weights),
                   yr = as_row(class_weights);
  bind.bind("x", xr).bind("c", cr).bind("y", yr);
  const diff::NamedArrays out = diff::evaluate(g, bind);
  EnergyBreakdown e;
  e.e_class = out.at("class")[0];
  e.e_concept = out.at("concept").data();
  e.e_global = out.at("global")[0];
  double concept_total = 0.0;
  for (double v : e.e_concept) concept_total += v;
  e.e_joint = e.e_class + cfg.lambda_concept_inf * concept_total +
              cfg.lambda_global_inf * e.e_global;
  return e;
}

double log_sum_exp(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("log_sum_exp of an empty vector");
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  return mx + std::log(total);
}

std::vector<double> class_posterior(const Theta& theta,
                                    std::span<const double> x) {
  check_features(theta, x);
  const DenseArray xr = as_row(x);
  const std::vector<double> energies =
      example_energies(theta, xr).front().class_energy;
  std::vector<double> neg(energies.size());
  for (std::size_t m = 0; m < energies.size(); ++m) neg[m] = -energies[m];
  const double lse = log_sum_exp(neg);
  std::vector<double> p(energies.size());
  for (std::size_t m = 0; m < energies.size(); ++m) {
    p[m] = std::exp(neg[m] - lse);
  }
  return p;
}

std::vector<ExampleEnergies> example_energies(const Theta& theta,
                                              const DenseArray& features) {
  const ModelConfig& cfg = theta.config();
  if (features.cols() != cfg.feature_dim) {
    throw ShapeError("feature matrix has " + std::to_string(features.cols()) +
                     " columns, model expects " +
                     std::to_string(cfg.feature_dim));
  }
  const std::size_t rows = features.rows();
  if (rows == 0) return {};
  Graph g;
  EnergyGraphBuilder b(g, cfg);
  NodeId xi = g.input("x", {rows, cfg.feature_dim});
  NodeId z = b.features(xi);
  g.mark_output("class", b.class_energies_all(z));
  auto both = b.concept_energies_both(z);
  g.mark_output("concept0", both[0]);
  g.mark_output("concept1", both[1]);
  diff::Bindings bind;
  theta.bind(bind);
  bind.bind("x", features);
  const diff::NamedArrays out = diff::evaluate(g, bind);
  const DenseArray& ec = out.at("class");
  const DenseArray& e0 = out.at("concept0");
  const DenseArray& e1 = out.at("concept1");
  std::vector<ExampleEnergies> result(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    ExampleEnergies& ex = result[r];
    ex.class_energy.assign(ec.values().begin() + r * cfg.num_classes,
                           ec.values().begin() + (r + 1) * cfg.num_classes);
    ex.concept_energy.resize(cfg.num_concepts);
    for (std::size_t k = 0; k < cfg.num_concepts; ++k) {
      ex.concept_energy[k] = {e0.at(r, k), e1.at(r, k)};
    }
  }
  return result;
}

DenseArray global_energy_table(const Theta& theta,
                               const std::vector<ConceptBits>& concepts) {
  const ModelConfig& cfg = theta.config();
  const std::size_t n = concepts.size();
  if (n == 0) return DenseArray({0, cfg.num_classes});
  DenseArray weights({n, cfg.num_concepts});
  for (std::size_t i = 0; i < n; ++i) {
    if (concepts[i].size() != cfg.num_concepts) {
      throw ShapeError("concept vector has wrong length");
    }
    for (std::size_t k = 0; k < cfg.num_concepts; ++k) {
      weights.at(i, k) = concepts[i][k] ? 1.0 : 0.0;
    }
  }
  constexpr std::size_t kChunk = 4096;
  DenseArray table({n, cfg.num_classes});
  diff::Bindings bind;
  theta.bind(bind);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t rows = std::min(kChunk, n - start);
    const std::size_t width = cfg.num_concepts;
    DenseArray chunk({rows, width},
                     std::vector<double>(weights.values().begin() + start * width,
                                         weights.values().begin() +
                                             (start + rows) * width));
    Graph g;
    EnergyGraphBuilder b(g, cfg);
    NodeId ci = g.input("c", {rows, width});
    g.mark_output("e", b.global_energies_all(ci));
    bind.bind("c", chunk);
    const DenseArray e = diff::evaluate(g, bind).at("e");
    std::copy(e.values().begin(), e.values().end(),
              table.values().begin() + start * cfg.num_classes);
  }
  return table;
}

}  // namespace ecbm
