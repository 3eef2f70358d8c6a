// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ecbm/model.hpp"

namespace ecbm::data {

struct Example {
  std::vector<double> features;
  ConceptBits concepts;
  std::size_t label = 0;
  friend bool operator==(const Example&, const Example&) = default;
};

struct Dataset {
  std::size_t num_concepts = 0;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::uint64_t generator_hash = 0;
  /// Expected per-concept accuracy of the Bayes classifier that knows the
  /// generating process; absent for loaded data without one.
  std::optional<double> bayes_concept_accuracy;
  std::vector<Example> examples;

  std::size_t size() const { return examples.size(); }
  bool empty() const { return examples.empty(); }
  /// Throws ShapeError on any example whose dimensions disagree.
  void validate() const;
  /// size() x feature_dim matrix, optionally restricted to `rows`.
  DenseArray feature_matrix() const;
  DenseArray feature_matrix(const std::vector<std::size_t>& rows) const;
  /// Empirical class frequencies.
  std::vector<double> class_frequencies() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Parameters of the synthetic concept-structured generator.
///
/// Each example draws a class uniformly, copies that class's concept
/// prototype, flips each bit with probability epsilon, then forces every
/// coupled pair (a, b) to c_b = c_a. Features are A [c ; onehot(y)] plus
/// Gaussian noise of scale sigma, with A drawn from feature_seed.
struct GeneratorSpec {
  std::size_t num_concepts = 6;
  std::size_t num_classes = 4;
  std::size_t feature_dim = 16;
  std::size_t num_examples = 2000;
  /// One bit vector per class; empty means draw distinct ones from
  /// feature_seed.
  std::vector<ConceptBits> prototypes;
  double epsilon = 0.05;
  std::vector<std::pair<std::size_t, std::size_t>> couplings;
  std::uint64_t feature_seed = 7;
  double sigma = 0.5;

  void validate() const;
  friend bool operator==(const GeneratorSpec&, const GeneratorSpec&) = default;
};

/// Flat "key = value" text, '#' comments. Keys: K, M, f, N, epsilon, sigma,
/// feature_seed, couplings ("0-1,2-3"), prototypes ("0101,1100,...").
GeneratorSpec parse_generator_spec(std::string_view text);
std::string format_generator_spec(const GeneratorSpec& spec);

/// The prototypes the generator actually uses (explicit or drawn).
std::vector<ConceptBits> resolve_prototypes(const GeneratorSpec& spec);
/// The features x concepts+classes mixing matrix.
DenseArray feature_map(const GeneratorSpec& spec);

Dataset generate(const GeneratorSpec& spec, std::uint64_t seed);

/// Bayes-optimal expected concept accuracy on `dataset` under `spec`'s
/// generating process, by exact enumeration of every (c, y).
double bayes_concept_accuracy(const GeneratorSpec& spec,
                              const Dataset& dataset);

/// Text format: one header line
///   ecbm-dataset v1 K=<K> M=<M> f=<f> N=<N> hash=<hex> bayes=<acc|none>
/// then one line per example: features | concept bits | class index.
std::string format_dataset(const Dataset& dataset);
/// Throws ParseError naming the offending line.
Dataset parse_dataset(std::string_view text);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view text);
/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

}  // namespace ecbm::data
