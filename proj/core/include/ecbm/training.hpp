// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/graph.hpp"
#include "ecbm/model.hpp"

namespace ecbm::train {

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 64;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  double lambda_c = 0.3;
  double lambda_g = 0.3;
  /// Uniform random concept vectors added to each batch's negative set.
  std::size_t negative_samples = 20;
  /// Share of examples whose global-energy concept input is perturbed.
  double perturb_fraction = 0.2;
  /// Flip probability of each bit of a perturbed example.
  double perturb_bit_prob = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LossBreakdown {
  double l_class = 0.0;
  double l_concept = 0.0;
  double l_global = 0.0;
  double l_total = 0.0;
};

/// E_class(x, y) + log sum_m exp(-E_class(x, m)).
double class_loss(const Theta& theta, std::span<const double> x,
                  std::size_t label);
/// sum_k E_concept(x, k, c_k) + log(exp(-E_concept(x, k, 0)) +
///                                  exp(-E_concept(x, k, 1))).
double concept_loss(const Theta& theta, std::span<const double> x,
                    const ConceptBits& concepts);
/// E_global(c, y) + log sum_{c' in negatives, m} exp(-E_global(c', m)).
double global_loss(const Theta& theta, const ConceptBits& concepts,
                   std::size_t label, const std::vector<ConceptBits>& negatives);

/// Distinct rows of `batch_concepts` in first-seen order, followed by
/// `random_count` uniform random bit vectors.
std::vector<ConceptBits> sample_negatives(
    const std::vector<ConceptBits>& batch_concepts, std::size_t random_count,
    std::size_t num_concepts, std::mt19937_64& rng);

/// With probability `fraction`, flips each bit with probability `bit_prob`.
ConceptBits perturb_concepts(const ConceptBits& concepts, double fraction,
                             double bit_prob, std::mt19937_64& rng);

/// Batched loss graph. Inputs: x (B x f), y (B x M one-hot), c (B x K),
/// c_global (B x K), negatives (n x K). Outputs l_class, l_concept,
/// l_global, l_total, each a batch mean.
diff::Graph build_loss_graph(const ModelConfig& config, std::size_t batch,
                             std::size_t num_negatives, double lambda_c,
                             double lambda_g);

struct BatchInputs {
  DenseArray x, y, c, c_global, negatives;
};

BatchInputs make_batch(const data::Dataset& dataset,
                       const std::vector<std::size_t>& rows,
                       const std::vector<ConceptBits>& global_concepts,
                       const std::vector<ConceptBits>& negatives);

struct TrainResult {
  Theta theta;
  /// Mean losses of each epoch, weighted by batch size.
  std::vector<LossBreakdown> history;
};

using EpochCallback = std::function<void(std::size_t, const LossBreakdown&)>;

/// Minibatch SGD. Throws NumericalError naming the batch on a non-finite
/// loss.
TrainResult train(const Theta& init, const data::Dataset& dataset,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

}  // namespace ecbm::train
