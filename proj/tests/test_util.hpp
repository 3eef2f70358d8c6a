// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/model.hpp"

namespace ecbm::testing {

inline ModelConfig small_config(std::size_t k, std::size_t m, std::size_t f = 5,
                                std::size_t d = 6) {
  ModelConfig c;
  c.num_concepts = k;
  c.num_classes = m;
  c.feature_dim = f;
  c.embed_dim = d;
  return c;
}

/// Every parameter drawn from N(0, scale^2), so all heads are far from flat.
inline Theta random_theta(const ModelConfig& config, std::uint64_t seed,
                          double scale = 0.7) {
  Theta theta(config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& [name, array] : theta.params()) {
    for (double& v : array.values()) v = n(rng);
  }
  return theta;
}

inline std::vector<double> random_vector(std::size_t n, std::mt19937_64& rng,
                                         double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

inline data::Dataset random_dataset(std::size_t k, std::size_t m, std::size_t f,
                                    std::size_t n, std::uint64_t seed) {
  data::Dataset ds;
  ds.num_concepts = k;
  ds.num_classes = m;
  ds.feature_dim = f;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    data::Example e;
    e.features = random_vector(f, rng);
    for (std::size_t j = 0; j < k; ++j) e.concepts.push_back(rng() & 1U);
    e.label = rng() % m;
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

inline std::vector<double> onehot(std::size_t m, std::size_t y) {
  std::vector<double> v(m, 0.0);
  v[y] = 1.0;
  return v;
}

inline std::vector<double> bits_to_weights(const ConceptBits& c) {
  return {c.begin(), c.end()};
}

inline interpret::Query query(interpret::QueryKind kind, std::size_t label = 0,
                              std::size_t k = 0, std::size_t k_prime = 0,
                              std::uint8_t value = 0) {
  interpret::Query q;
  q.kind = kind;
  q.label = label;
  q.k = k;
  q.k_prime = k_prime;
  q.value = value;
  return q;
}

inline ConceptBits bits_of(std::size_t value, std::size_t k) {
  ConceptBits c(k);
  for (std::size_t i = 0; i < k; ++i) c[i] = (value >> i) & 1U;
  return c;
}

}  // namespace ecbm::testing
