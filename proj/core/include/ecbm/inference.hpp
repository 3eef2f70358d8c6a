// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/model.hpp"
#include "ecbm/prob_table.hpp"

namespace ecbm::infer {

struct InferenceConfig {
  double step = 0.1;
  std::size_t max_iters = 100;
  double tolerance = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Step halvings tried before an iteration gives up on descent.
  std::size_t max_halvings = 8;
  /// Start from the per-head posteriors instead of zero logits.
  bool warm_start = false;
  /// Largest number of free concepts enumerated exactly.
  std::size_t max_exact_free = 12;
  /// Override the checkpoint's inference energy weights.
  std::optional<double> lambda_concept;
  std::optional<double> lambda_global;

  void validate() const;
};

/// Unconstrained logits and their squashed probabilities.
struct RelaxedState {
  std::vector<double> c_logits;
  std::vector<double> y_logits;
  std::vector<double> concept_probs;  // sigmoid, fixed bits pinned
  std::vector<double> class_probs;    // softmax
};

/// Concept index (zero-based) -> fixed bit.
using InterventionMask = std::map<std::size_t, std::uint8_t>;

struct Prediction {
  ConceptBits concepts;
  std::size_t label = 0;
  RelaxedState state;
  EnergyBreakdown energies;
  std::size_t iterations = 0;
};

/// The joint-energy weights actually used under `config`.
std::pair<double, double> inference_lambdas(const Theta& theta,
                                            const InferenceConfig& config);

/// Gradient descent on the relaxed joint energy, then rounding:
/// concept prob >= 0.5 -> 1, class by argmax with ties to the lowest index.
Prediction predict(const Theta& theta, std::span<const double> x,
                   const InferenceConfig& config = {});
/// predict with the masked concepts clamped to their bits.
Prediction intervene_gradient(const Theta& theta, std::span<const double> x,
                              const InterventionMask& mask,
                              const InferenceConfig& config = {});
std::vector<Prediction> predict_all(const Theta& theta,
                                    const data::Dataset& dataset,
                                    const InferenceConfig& config = {});

/// Boltzmann distribution over every completion (free concepts x classes).
/// Variables: the free concepts in index order, then y; rows are
/// lexicographic with y fastest. Throws EnumerationLimit when more than
/// max_exact_free are free.
ProbTable intervene_exact(const Theta& theta, std::span<const double> x,
                          const InterventionMask& mask,
                          const InferenceConfig& config = {});
/// intervene_exact summed over y: a table over the free concepts.
ProbTable missing_concept_posterior(const Theta& theta,
                                    std::span<const double> x,
                                    const InterventionMask& mask,
                                    const InferenceConfig& config = {});
/// p(y | x, c_k) by enumerating the remaining concepts.
std::vector<double> class_given_concept(const Theta& theta,
                                        std::span<const double> x,
                                        std::size_t k, std::uint8_t value,
                                        const InferenceConfig& config = {});

struct Marginals {
  std::vector<double> concept_probs;
  std::vector<double> class_probs;
};
/// Per-variable marginals of the intervene_exact table.
Marginals exact_marginals(const Theta& theta, std::span<const double> x,
                          const InterventionMask& mask,
                          const InferenceConfig& config = {});

/// Rounding rules shared by every predictor.
ConceptBits round_concepts(std::span<const double> probs);
std::size_t argmax(std::span<const double> v);

void check_mask(const InterventionMask& mask, std::size_t num_concepts);

}  // namespace ecbm::infer
