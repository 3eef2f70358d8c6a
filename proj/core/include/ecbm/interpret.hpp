// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Dataset-level conditional interpretations.
//
// The model joint used by every soft estimate is
//
//   q(x, c, y) = p(x) * prod_k p(c_k | x) * p(y | c)
//
// with p(x) uniform over the supplied dataset, p(c_k | x) the Boltzmann
// distribution of the concept head over the two bits, and p(y | c) the
// softmax of the negated global energies over classes. Every query is a
// ratio of sums of q, normalized over the query variable.

#include <cstdint>
#include <optional>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/inference.hpp"
#include "ecbm/model.hpp"
#include "ecbm/prob_table.hpp"

namespace ecbm::interpret {

enum class EstimateMode { kSoft, kHard };

struct EstimatorConfig {
  EstimateMode mode = EstimateMode::kSoft;
  /// Largest K summed over exactly.
  std::size_t exact_limit = 12;
  /// Uniform concept samples used beyond exact_limit; 0 disables sampling.
  std::size_t monte_carlo_samples = std::size_t{1} << 14;
  std::uint64_t seed = 0;
  infer::InferenceConfig inference;

  void validate() const;
};

enum class QueryKind {
  kMarginal,           // p(c_k | y)
  kJoint,              // p(c | y)
  kCondClass,          // p(c_k | c_k' = value, y)
  kCond,               // p(c_k | c_k' = value)
  kJointMissing,       // p(free concepts, y | x, mask)
  kMissingConcept,     // p(free concepts | x, mask)
  kClassGivenConcept,  // p(y | x, c_k = value)
};

struct Query {
  QueryKind kind = QueryKind::kMarginal;
  std::size_t label = 0;
  std::size_t k = 0;
  std::size_t k_prime = 0;
  std::uint8_t value = 0;
  std::vector<double> features;
  infer::InterventionMask mask;
};

/// Table over c_k for every k, given class y.
std::vector<ProbTable> marginal_concept_importance(
    const Theta& theta, const data::Dataset& dataset, std::size_t label,
    const EstimatorConfig& config = {});

struct JointImportance {
  /// Unnormalized score: sum_x p(y|c) prod_k p(c_k|x) p(x) over
  /// sum_x exp(-E_class(x, y)) p(x).
  double score = 0.0;
  /// Normalized over {0,1}^K; absent beyond the exact limit.
  std::optional<ProbTable> table;
};
JointImportance joint_concept_importance(const Theta& theta,
                                         const data::Dataset& dataset,
                                         std::size_t label,
                                         const ConceptBits& concepts,
                                         const EstimatorConfig& config = {});

ProbTable concept_conditional_given_class(const Theta& theta,
                                          const data::Dataset& dataset,
                                          std::size_t k, std::size_t k_prime,
                                          std::uint8_t value, std::size_t label,
                                          const EstimatorConfig& config = {});

/// Class frequencies of the dataset weight the per-class tables.
ProbTable concept_conditional(const Theta& theta, const data::Dataset& dataset,
                              std::size_t k, std::size_t k_prime,
                              std::uint8_t value,
                              const EstimatorConfig& config = {});

/// One rounded (or ground-truth) record per example.
struct Record {
  ConceptBits concepts;
  std::size_t label = 0;
};

/// Counting frequencies over records; an empty conditioning event yields an
/// undefined table. Instance-level kinds are rejected.
ProbTable count_frequencies(const std::vector<Record>& records,
                            std::size_t num_concepts, std::size_t num_classes,
                            const Query& query);
/// Frequencies of the rounded predictions of every example.
ProbTable hard_estimates(const Theta& theta, const data::Dataset& dataset,
                         const Query& query, const EstimatorConfig& config = {});
/// Frequencies of the ground truth.
ProbTable empirical_estimates(const data::Dataset& dataset, const Query& query);
/// Dispatches on config.mode; instance-level kinds are always exact.
ProbTable estimate(const Theta& theta, const data::Dataset& dataset,
                   const Query& query, const EstimatorConfig& config = {});

/// Materializes the model joint over dataset x {0,1}^K x classes from
/// single-example energy calls and answers queries by direct summation.
class BruteForceOracle {
 public:
  BruteForceOracle(const Theta& theta, const data::Dataset& dataset);
  ProbTable answer(const Query& query) const;
  /// q(x_i, c, y) with c given as an integer (bit k = concept k).
  double joint(std::size_t example, std::size_t concepts,
               std::size_t label) const;

 private:
  ProbTable instance(const Query& query) const;

  const Theta& theta_;
  std::size_t num_examples_, num_concepts_, num_classes_;
  std::vector<double> joint_;  // [example][c][y]
  std::vector<double> class_freq_;
};

ProbTable brute_force_oracle(const Theta& theta, const data::Dataset& dataset,
                             const Query& query);

}  // namespace ecbm::interpret
