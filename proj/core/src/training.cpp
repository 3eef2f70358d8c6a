// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "ecbm/error.hpp"

namespace ecbm::train {

using diff::Graph;
using diff::NodeId;

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("train: learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw InvalidArgument("train: momentum must lie in [0, 1)");
  }
  if (!(lambda_c >= 0.0) || !(lambda_g >= 0.0)) {
    throw InvalidArgument("train: loss weights must be >= 0");
  }
  if (!(perturb_fraction >= 0.0 && perturb_fraction <= 1.0) ||
      !(perturb_bit_prob >= 0.0 && perturb_bit_prob <= 1.0)) {
    throw InvalidArgument("train: perturbation probabilities must lie in [0, 1]");
  }
}

double class_loss(const Theta& theta, std::span<const double> x,
                  std::size_t label) {
  const std::size_t m = theta.config().num_classes;
  if (label >= m) throw InvalidArgument("class label out of range");
  std::vector<double> neg(m);
  double e_true = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    std::vector<double> onehot(m, 0.0);
    onehot[j] = 1.0;
    const double e = class_energy(theta, x, onehot);
    neg[j] = -e;
    if (j == label) e_true = e;
  }
  return e_true + log_sum_exp(neg);
}

double concept_loss(const Theta& theta, std::span<const double> x,
                    const ConceptBits& concepts) {
  const std::size_t k = theta.config().num_concepts;
  if (concepts.size() != k) throw ShapeError("concept vector has wrong length");
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double e0 = concept_energy(theta, x, i, 0.0);
    const double e1 = concept_energy(theta, x, i, 1.0);
    const double pair[2] = {-e0, -e1};
    total += (concepts[i] ? e1 : e0) + log_sum_exp(pair);
  }
  return total;
}

double global_loss(const Theta& theta, const ConceptBits& concepts,
                   std::size_t label, const std::vector<ConceptBits>& negatives) {
  const ModelConfig& cfg = theta.config();
  if (negatives.empty()) throw InvalidArgument("global loss needs negatives");
  if (label >= cfg.num_classes) throw InvalidArgument("class label out of range");
  auto weights = [](const ConceptBits& c) {
    return std::vector<double>(c.begin(), c.end());
  };
  std::vector<double> onehot(cfg.num_classes, 0.0);
  onehot[label] = 1.0;
  const double e_pos = global_energy(theta, weights(concepts), onehot);
  std::vector<double> neg;
  for (const ConceptBits& c : negatives) {
    const auto w = weights(c);
    for (std::size_t m = 0; m < cfg.num_classes; ++m) {
      std::vector<double> y(cfg.num_classes, 0.0);
      y[m] = 1.0;
      neg.push_back(-global_energy(theta, w, y));
    }
  }
  return e_pos + log_sum_exp(neg);
}

std::vector<ConceptBits> sample_negatives(
    const std::vector<ConceptBits>& batch_concepts, std::size_t random_count,
    std::size_t num_concepts, std::mt19937_64& rng) {
  std::vector<ConceptBits> out;
  std::set<ConceptBits> seen;
  for (const ConceptBits& c : batch_concepts) {
    if (seen.insert(c).second) out.push_back(c);
  }
  std::bernoulli_distribution coin(0.5);
  for (std::size_t i = 0; i < random_count; ++i) {
    ConceptBits c(num_concepts);
    for (auto& b : c) b = coin(rng) ? 1 : 0;
    out.push_back(std::move(c));
  }
  return out;
}

ConceptBits perturb_concepts(const ConceptBits& concepts, double fraction,
                             double bit_prob, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ConceptBits out = concepts;
  if (unit(rng) < fraction) {
    for (auto& b : out) {
      if (unit(rng) < bit_prob) b ^= 1;
    }
  }
  return out;
}

Graph build_loss_graph(const ModelConfig& config, std::size_t batch,
                       std::size_t num_negatives, double lambda_c,
                       double lambda_g) {
  const std::size_t k = config.num_concepts;
  const std::size_t m = config.num_classes;
  Graph g;
  EnergyGraphBuilder b(g, config);
  NodeId x = g.input("x", {batch, config.feature_dim});
  NodeId y = g.input("y", {batch, m});
  NodeId c = g.input("c", {batch, k});
  NodeId cg = g.input("c_global", {batch, k});
  NodeId negs = g.input("negatives", {num_negatives, k});

  NodeId z = b.features(x);

  NodeId e_class = b.class_energies_all(z);
  NodeId class_rows = g.add(g.sum_last(g.mul(e_class, y)),
                            g.log_sum_exp(g.scale(e_class, -1.0)));
  NodeId l_class = g.mean(class_rows);

  auto [e0, e1] = b.concept_energies_both(z);
  NodeId e_true = g.add(e0, g.mul(c, g.sub(e1, e0)));
  NodeId pairs = g.concat(g.reshape(g.scale(e0, -1.0), {batch * k, 1}),
                          g.reshape(g.scale(e1, -1.0), {batch * k, 1}));
  NodeId norm = g.reshape(g.log_sum_exp(pairs), {batch, k});
  NodeId l_concept = g.mean(g.sum_last(g.add(e_true, norm)));

  NodeId e_pos = b.global_energy(cg, y);
  NodeId e_neg = b.global_energies_all(negs);
  NodeId log_z = g.log_sum_exp(
      g.reshape(g.scale(e_neg, -1.0), {1, num_negatives * m}));
  NodeId l_global = g.add(g.mean(e_pos), g.mean(log_z));

  NodeId l_total = g.add(
      l_class, g.add(g.scale(l_concept, lambda_c), g.scale(l_global, lambda_g)));

  g.mark_output("l_class", l_class);
  g.mark_output("l_concept", l_concept);
  g.mark_output("l_global", l_global);
  g.mark_output("l_total", l_total);
  return g;
}

BatchInputs make_batch(const data::Dataset& dataset,
                       const std::vector<std::size_t>& rows,
                       const std::vector<ConceptBits>& global_concepts,
                       const std::vector<ConceptBits>& negatives) {
  const std::size_t k = dataset.num_concepts, m = dataset.num_classes;
  const std::size_t n = rows.size();
  BatchInputs in;
  in.x = dataset.feature_matrix(rows);
  in.y = DenseArray({n, m});
  in.c = DenseArray({n, k});
  in.c_global = DenseArray({n, k});
  for (std::size_t r = 0; r < n; ++r) {
    const data::Example& e = dataset.examples.at(rows[r]);
    in.y.at(r, e.label) = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
      in.c.at(r, j) = e.concepts[j];
      in.c_global.at(r, j) = global_concepts.at(r)[j];
    }
  }
  in.negatives = DenseArray({negatives.size(), k});
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    for (std::size_t j = 0; j < k; ++j) in.negatives.at(i, j) = negatives[i][j];
  }
  return in;
}

TrainResult train(const Theta& init, const data::Dataset& dataset,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  dataset.validate();
  const ModelConfig& mc = init.config();
  if (dataset.num_concepts != mc.num_concepts ||
      dataset.num_classes != mc.num_classes ||
      dataset.feature_dim != mc.feature_dim) {
    throw ShapeError("dataset dimensions do not match the model");
  }
  if (dataset.empty()) throw InvalidArgument("train: empty dataset");

  TrainResult result{init, {}};
  Theta& theta = result.theta;
  theta.set_lambdas(config.lambda_c, config.lambda_g, mc.lambda_concept_inf,
                    mc.lambda_global_inf);

  std::mt19937_64 rng(config.seed);
  std::map<std::pair<std::size_t, std::size_t>, Graph> graphs;
  std::map<std::string, DenseArray> velocity;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_index = 0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sum;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> rows(order.begin() + start, order.begin() + end);
      std::vector<ConceptBits> global_concepts;
      global_concepts.reserve(rows.size());
      for (std::size_t r : rows) {
        global_concepts.push_back(
            perturb_concepts(dataset.examples[r].concepts,
                             config.perturb_fraction, config.perturb_bit_prob,
                             rng));
      }
      const auto negatives = sample_negatives(
          global_concepts, config.negative_samples, mc.num_concepts, rng);
      const diff::EvalOptions opts{true, rng()};

      const auto key = std::make_pair(rows.size(), negatives.size());
      auto it = graphs.find(key);
      if (it == graphs.end()) {
        it = graphs
                 .emplace(key, build_loss_graph(mc, rows.size(),
                                                negatives.size(),
                                                config.lambda_c,
                                                config.lambda_g))
                 .first;
      }
      const BatchInputs in = make_batch(dataset, rows, global_concepts,
                                        negatives);
      diff::Bindings bind;
      theta.bind(bind);
      bind.bind("x", in.x)
          .bind("y", in.y)
          .bind("c", in.c)
          .bind("c_global", in.c_global)
          .bind("negatives", in.negatives);
      diff::GradientResult gr;
      try {
        gr = diff::gradient(it->second, bind, "l_total", opts);
      } catch (const NumericalError& e) {
        throw NumericalError("non-finite value in batch " +
                             std::to_string(batch_index) + ": " + e.what());
      }
      LossBreakdown lb{gr.outputs.at("l_class")[0],
                       gr.outputs.at("l_concept")[0],
                       gr.outputs.at("l_global")[0],
                       gr.outputs.at("l_total")[0]};
      if (!std::isfinite(lb.l_total)) {
        throw NumericalError("non-finite loss in batch " +
                             std::to_string(batch_index));
      }
      const double w = static_cast<double>(rows.size());
      sum.l_class += w * lb.l_class;
      sum.l_concept += w * lb.l_concept;
      sum.l_global += w * lb.l_global;
      sum.l_total += w * lb.l_total;

      if (config.learning_rate == 0.0) continue;
      for (auto& [name, value] : theta.params()) {
        const DenseArray& grad = gr.gradients.at(name);
        if (config.momentum > 0.0) {
          auto [vit, inserted] =
              velocity.try_emplace(name, DenseArray(value.shape()));
          auto vel = vit->second.values();
          for (std::size_t i = 0; i < vel.size(); ++i) {
            vel[i] = config.momentum * vel[i] + grad[i];
            value[i] -= config.learning_rate * vel[i];
          }
        } else {
          for (std::size_t i = 0; i < value.size(); ++i) {
            value[i] -= config.learning_rate * grad[i];
          }
        }
      }
      if (!theta.all_finite()) {
        throw NumericalError("non-finite parameter after batch " +
                             std::to_string(batch_index));
      }
    }
    const double n = static_cast<double>(dataset.size());
    LossBreakdown mean{sum.l_class / n, sum.l_concept / n, sum.l_global / n,
                       sum.l_total / n};
    result.history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  return result;
}

}  // namespace ecbm::train
