// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ecbm/array.hpp"
#include "ecbm/graph.hpp"

namespace ecbm {

using diff::DenseArray;
using ConceptBits = std::vector<std::uint8_t>;

/// Dimensions and energy weights of one model.
///
/// Two weight pairs exist: (lambda_concept, lambda_global) weight the losses
/// during training, (lambda_concept_inf, lambda_global_inf) weight the joint
/// energy that inference, intervention and the instance-level conditionals
/// minimize or exponentiate. The inference defaults put class, concept and
/// global energies at 1 : 1 : 0.01.
struct ModelConfig {
  std::size_t num_concepts = 0;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  /// Embedding width; also the hidden width of every head.
  std::size_t embed_dim = 16;
  double dropout = 0.2;
  double lambda_concept = 0.3;
  double lambda_global = 0.3;
  double lambda_concept_inf = 1.0;
  double lambda_global_inf = 0.01;

  std::size_t hidden_dim() const { return embed_dim; }
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

namespace params {
inline constexpr const char* kFeatureW1 = "feature.w1";
inline constexpr const char* kFeatureB1 = "feature.b1";
inline constexpr const char* kFeatureW2 = "feature.w2";
inline constexpr const char* kFeatureB2 = "feature.b2";
inline constexpr const char* kClassEmbed = "class.embed";
inline constexpr const char* kConceptPos = "concept.embed_pos";
inline constexpr const char* kConceptNeg = "concept.embed_neg";
inline constexpr const char* kClassFcW = "class_head.fc_w";
inline constexpr const char* kClassFcB = "class_head.fc_b";
inline constexpr const char* kClassOutW = "class_head.out_w";
inline constexpr const char* kClassOutB = "class_head.out_b";
inline constexpr const char* kConceptFcW = "concept_head.fc_w";
inline constexpr const char* kConceptFcB = "concept_head.fc_b";
inline constexpr const char* kConceptOutW = "concept_head.out_w";
inline constexpr const char* kConceptOutB = "concept_head.out_b";
inline constexpr const char* kGlobalProjW = "global_head.proj_w";
inline constexpr const char* kGlobalProjB = "global_head.proj_b";
inline constexpr const char* kGlobalOutW = "global_head.out_w";
inline constexpr const char* kGlobalOutB = "global_head.out_b";
}  // namespace params

/// Every learnable parameter, keyed by name (see ecbm::params).
class Theta {
 public:
  Theta() = default;
  /// All parameters zero.
  explicit Theta(ModelConfig config);
  /// Layers uniform(+-1/sqrt(fan_in)); embeddings N(0, 1) * 0.01.
  static Theta initialize(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  /// Replaces the energy weights; dimensions must not change.
  void set_lambdas(double concept_w, double global_w, double concept_inf,
                   double global_inf);

  DenseArray& param(const std::string& name);
  const DenseArray& param(const std::string& name) const;
  const std::map<std::string, DenseArray>& params() const { return params_; }
  std::map<std::string, DenseArray>& params() { return params_; }

  void bind(diff::Bindings& bindings) const;
  bool all_finite() const;

  friend bool operator==(const Theta&, const Theta&) = default;

 private:
  ModelConfig config_;
  std::map<std::string, DenseArray> params_;
};

/// Adds the model's parameter leaves to a graph and builds energy subgraphs.
///
/// Row conventions: feature matrices are rows x feature_dim, concept weights
/// rows x K in [0,1], class weights rows x M on the simplex.
class EnergyGraphBuilder {
 public:
  EnergyGraphBuilder(diff::Graph& graph, const ModelConfig& config);

  diff::Graph& graph() { return graph_; }
  const ModelConfig& config() const { return config_; }

  /// Two-layer perceptron, rows x hidden.
  diff::NodeId features(diff::NodeId x);
  /// Class energy of every class for every row: rows x M.
  diff::NodeId class_energies_all(diff::NodeId z);
  /// Class energy of row i against class weights row i: rows x 1.
  diff::NodeId class_energy(diff::NodeId z, diff::NodeId class_weights);
  /// Per-concept energy at relaxed concept weights: rows x K.
  diff::NodeId concept_energies(diff::NodeId z, diff::NodeId concept_weights);
  /// Per-concept energies at bit 0 and bit 1 (shared dropout mask): rows x K.
  std::array<diff::NodeId, 2> concept_energies_both(diff::NodeId z);
  /// Global energy of paired rows: rows x 1.
  diff::NodeId global_energy(diff::NodeId concept_weights,
                             diff::NodeId class_weights);
  /// Global energy of every concept row against every class: rows x M.
  diff::NodeId global_energies_all(diff::NodeId concept_weights);

 private:
  diff::NodeId head(diff::NodeId mixed_in, diff::NodeId normalized_embed,
                    diff::NodeId out_w, diff::NodeId out_b);
  diff::NodeId concept_hidden(diff::NodeId z);
  diff::NodeId projected_concepts(diff::NodeId concept_weights);

  diff::Graph& graph_;
  ModelConfig config_;
  diff::NodeId feature_w1_, feature_b1_, feature_w2_, feature_b2_;
  diff::NodeId class_embed_, concept_pos_, concept_neg_;
  diff::NodeId class_fc_w_, class_fc_b_, class_out_w_, class_out_b_;
  diff::NodeId concept_fc_w_, concept_fc_b_, concept_out_w_, concept_out_b_;
  diff::NodeId global_proj_w_, global_proj_b_, global_out_w_, global_out_b_;
};

struct EnergyBreakdown {
  double e_class = 0.0;
  std::vector<double> e_concept;  // one per concept
  double e_global = 0.0;
  double e_joint = 0.0;
};

std::vector<double> extract_features(const Theta& theta,
                                     std::span<const double> x);
/// c * v_pos[k] + (1 - c) * v_neg[k]; k is zero-based.
std::vector<double> concept_embedding(const Theta& theta, std::size_t k,
                                      double c);
double class_energy(const Theta& theta, std::span<const double> x,
                    std::span<const double> class_weights);
double concept_energy(const Theta& theta, std::span<const double> x,
                      std::size_t k, double c);
double global_energy(const Theta& theta, std::span<const double> concept_weights,
                     std::span<const double> class_weights);
/// e_joint = e_class + lambda_concept_inf * sum(e_concept)
///         + lambda_global_inf * e_global.
EnergyBreakdown joint_energy(const Theta& theta, std::span<const double> x,
                             std::span<const double> concept_weights,
                             std::span<const double> class_weights);
/// Boltzmann distribution over classes from the class energies.
std::vector<double> class_posterior(const Theta& theta,
                                    std::span<const double> x);

/// Discrete energies of one example, the building block of every
/// enumeration-based query.
struct ExampleEnergies {
  std::vector<double> class_energy;                 // M
  std::vector<std::array<double, 2>> concept_energy;  // K x {bit 0, bit 1}
};

/// Batched evaluation over a feature matrix (rows x feature_dim).
std::vector<ExampleEnergies> example_energies(const Theta& theta,
                                             const DenseArray& features);
/// Global energies of each concept vector against each class: n x M.
DenseArray global_energy_table(const Theta& theta,
                               const std::vector<ConceptBits>& concepts);

/// Validation helpers shared by the energy entry points.
void check_class_weights(std::span<const double> w, std::size_t num_classes);
void check_concept_weights(std::span<const double> w, std::size_t num_concepts);

/// log(sum(exp(v))) stabilized by the max.
double log_sum_exp(std::span<const double> v);

}  // namespace ecbm
