// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/interpret.hpp"

#include <array>
#include <cmath>
#include <random>

#include "ecbm/error.hpp"
#include "ecbm/parallel.hpp"

namespace ecbm::interpret {
namespace {

void check_concept(std::size_t k, std::size_t num_concepts) {
  if (k >= num_concepts) {
    throw InvalidArgument("concept index " + std::to_string(k) +
                          " out of range [0, " + std::to_string(num_concepts) +
                          ")");
  }
}

void check_label(std::size_t y, std::size_t num_classes) {
  if (y >= num_classes) {
    throw InvalidArgument("class " + std::to_string(y) + " out of range [0, " +
                          std::to_string(num_classes) + ")");
  }
}

void check_pair(std::size_t k, std::size_t k_prime, std::uint8_t value,
                std::size_t num_concepts) {
  check_concept(k, num_concepts);
  check_concept(k_prime, num_concepts);
  if (k == k_prime) throw InvalidArgument("k and k' must differ");
  if (value > 1) throw InvalidArgument("concept value must be 0 or 1");
}

ProbTable bit_table(std::size_t k, double p0, double p1) {
  ProbTable t{{concept_var(k)}, {{0}, {1}}, {p0, p1}, true};
  t.normalize();
  return t;
}

std::vector<std::string> concept_vars(std::size_t k) {
  std::vector<std::string> v;
  for (std::size_t i = 0; i < k; ++i) v.push_back(concept_var(i));
  return v;
}

// S(c, y) = p(y | c) * mean_x prod_k p(c_k | x) over a set of concept
// configurations: all of {0,1}^K in table order, or uniform samples.
struct Support {
  std::vector<ConceptBits> configs;
  bool exact = true;
  std::vector<double> weight;  // configs x M
  std::vector<double> class_evidence;  // mean_x exp(-E_class(x, y))
  std::size_t num_classes = 0;

  double s(std::size_t a, std::size_t y) const {
    return weight[a * num_classes + y];
  }
};

Support build_support(const Theta& theta, const data::Dataset& dataset,
                      const EstimatorConfig& config) {
  config.validate();
  const ModelConfig& mc = theta.config();
  const std::size_t k = mc.num_concepts, m = mc.num_classes;
  if (dataset.empty()) throw InvalidArgument("interpretation needs a dataset");
  if (dataset.num_concepts != k || dataset.num_classes != m ||
      dataset.feature_dim != mc.feature_dim) {
    throw ShapeError("dataset dimensions do not match the model");
  }
  Support sup;
  sup.num_classes = m;
  if (k <= config.exact_limit) {
    const std::size_t n = std::size_t{1} << k;
    sup.configs.assign(n, ConceptBits(k));
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t i = 0; i < k; ++i) {
        sup.configs[a][i] = (a >> (k - 1 - i)) & 1U;
      }
    }
  } else if (config.monte_carlo_samples > 0) {
    sup.exact = false;
    std::mt19937_64 rng(config.seed);
    std::bernoulli_distribution coin(0.5);
    sup.configs.assign(config.monte_carlo_samples, ConceptBits(k));
    for (auto& c : sup.configs) {
      for (auto& b : c) b = coin(rng) ? 1 : 0;
    }
  } else {
    throw EnumerationLimit("K = " + std::to_string(k) +
                           " exceeds the exact limit of " +
                           std::to_string(config.exact_limit) +
                           " and sampling is disabled");
  }

  const auto ex = example_energies(theta, dataset.feature_matrix());
  const std::size_t n_x = ex.size();
  // log p(c_k = b | x) per example, [x][k][b].
  std::vector<double> logp(n_x * k * 2);
  sup.class_evidence.assign(m, 0.0);
  for (std::size_t i = 0; i < n_x; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      const double neg[2] = {-ex[i].concept_energy[j][0],
                             -ex[i].concept_energy[j][1]};
      const double z = log_sum_exp(neg);
      logp[(i * k + j) * 2] = neg[0] - z;
      logp[(i * k + j) * 2 + 1] = neg[1] - z;
    }
    for (std::size_t y = 0; y < m; ++y) {
      sup.class_evidence[y] += std::exp(-ex[i].class_energy[y]);
    }
  }
  for (double& v : sup.class_evidence) v /= static_cast<double>(n_x);

  const std::size_t n_c = sup.configs.size();
  std::vector<double> prior(n_c, 0.0);
  parallel_for(n_c, [&](std::size_t a) {
    const ConceptBits& c = sup.configs[a];
    double total = 0.0;
    for (std::size_t i = 0; i < n_x; ++i) {
      double lp = 0.0;
      for (std::size_t j = 0; j < k; ++j) lp += logp[(i * k + j) * 2 + c[j]];
      total += std::exp(lp);
    }
    prior[a] = total / static_cast<double>(n_x);
  });

  const DenseArray eg = global_energy_table(theta, sup.configs);
  sup.weight.assign(n_c * m, 0.0);
  std::vector<double> neg(m);
  for (std::size_t a = 0; a < n_c; ++a) {
    for (std::size_t y = 0; y < m; ++y) neg[y] = -eg.at(a, y);
    const double z = log_sum_exp(neg);
    for (std::size_t y = 0; y < m; ++y) {
      sup.weight[a * m + y] = std::exp(neg[y] - z) * prior[a];
    }
  }
  return sup;
}

ProbTable marginal_from(const Support& sup, std::size_t k, std::size_t y) {
  double t[2] = {0.0, 0.0};
  for (std::size_t a = 0; a < sup.configs.size(); ++a) {
    t[sup.configs[a][k]] += sup.s(a, y);
  }
  return bit_table(k, t[0], t[1]);
}

// sum over configs with c_k' = value, split by c_k, at class y.
std::array<double, 2> pair_sums(const Support& sup, std::size_t k,
                                std::size_t k_prime, std::uint8_t value,
                                std::size_t y) {
  std::array<double, 2> t{0.0, 0.0};
  for (std::size_t a = 0; a < sup.configs.size(); ++a) {
    if (sup.configs[a][k_prime] != value) continue;
    t[sup.configs[a][k]] += sup.s(a, y);
  }
  return t;
}

ProbTable wrap_class_vector(const std::vector<double>& p) {
  ProbTable t{{"y"}, {}, p, true};
  for (std::size_t y = 0; y < p.size(); ++y) t.rows.push_back({y});
  return t;
}

}  // namespace

void EstimatorConfig::validate() const {
  if (exact_limit < 1) throw InvalidArgument("estimator: exact_limit < 1");
  if (exact_limit > 24) throw InvalidArgument("estimator: exact_limit > 24");
  inference.validate();
}

std::vector<ProbTable> marginal_concept_importance(
    const Theta& theta, const data::Dataset& dataset, std::size_t label,
    const EstimatorConfig& config) {
  check_label(label, theta.config().num_classes);
  const Support sup = build_support(theta, dataset, config);
  std::vector<ProbTable> out;
  for (std::size_t k = 0; k < theta.config().num_concepts; ++k) {
    out.push_back(marginal_from(sup, k, label));
  }
  return out;
}

JointImportance joint_concept_importance(const Theta& theta,
                                         const data::Dataset& dataset,
                                         std::size_t label,
                                         const ConceptBits& concepts,
                                         const EstimatorConfig& config) {
  const ModelConfig& mc = theta.config();
  check_label(label, mc.num_classes);
  if (concepts.size() != mc.num_concepts) {
    throw ShapeError("concept vector has wrong length");
  }
  for (auto b : concepts) {
    if (b > 1) throw InvalidArgument("concept bits must be 0 or 1");
  }
  JointImportance out;
  if (mc.num_concepts <= config.exact_limit) {
    const Support sup = build_support(theta, dataset, config);
    std::size_t idx = 0;
    for (auto b : concepts) idx = (idx << 1) | b;
    out.score = sup.s(idx, label) / sup.class_evidence[label];
    ProbTable t{concept_vars(mc.num_concepts), {}, {}, true};
    for (std::size_t a = 0; a < sup.configs.size(); ++a) {
      t.rows.emplace_back(sup.configs[a].begin(), sup.configs[a].end());
      t.probs.push_back(sup.s(a, label));
    }
    t.normalize();
    out.table = std::move(t);
    return out;
  }
  // Single configuration: no enumeration needed for the score.
  if (dataset.empty()) throw InvalidArgument("interpretation needs a dataset");
  const auto ex = example_energies(theta, dataset.feature_matrix());
  double prior = 0.0, evidence = 0.0;
  for (const auto& e : ex) {
    double lp = 0.0;
    for (std::size_t j = 0; j < mc.num_concepts; ++j) {
      const double neg[2] = {-e.concept_energy[j][0], -e.concept_energy[j][1]};
      lp += neg[concepts[j]] - log_sum_exp(neg);
    }
    prior += std::exp(lp);
    evidence += std::exp(-e.class_energy[label]);
  }
  const DenseArray eg = global_energy_table(theta, {concepts});
  std::vector<double> neg(mc.num_classes);
  for (std::size_t y = 0; y < mc.num_classes; ++y) neg[y] = -eg.at(0, y);
  const double p_y = std::exp(neg[label] - log_sum_exp(neg));
  out.score = p_y * prior / evidence;
  return out;
}

ProbTable concept_conditional_given_class(const Theta& theta,
                                          const data::Dataset& dataset,
                                          std::size_t k, std::size_t k_prime,
                                          std::uint8_t value, std::size_t label,
                                          const EstimatorConfig& config) {
  check_pair(k, k_prime, value, theta.config().num_concepts);
  check_label(label, theta.config().num_classes);
  const Support sup = build_support(theta, dataset, config);
  const auto t = pair_sums(sup, k, k_prime, value, label);
  return bit_table(k, t[0], t[1]);
}

ProbTable concept_conditional(const Theta& theta, const data::Dataset& dataset,
                              std::size_t k, std::size_t k_prime,
                              std::uint8_t value,
                              const EstimatorConfig& config) {
  check_pair(k, k_prime, value, theta.config().num_concepts);
  const Support sup = build_support(theta, dataset, config);
  const std::vector<double> pi = dataset.class_frequencies();
  double t[2] = {0.0, 0.0};
  for (std::size_t y = 0; y < sup.num_classes; ++y) {
    if (pi[y] == 0.0) continue;
    double z = 0.0;
    for (std::size_t a = 0; a < sup.configs.size(); ++a) z += sup.s(a, y);
    const auto part = pair_sums(sup, k, k_prime, value, y);
    t[0] += pi[y] * part[0] / z;
    t[1] += pi[y] * part[1] / z;
  }
  return bit_table(k, t[0], t[1]);
}

ProbTable count_frequencies(const std::vector<Record>& records,
                            std::size_t num_concepts, std::size_t num_classes,
                            const Query& query) {
  switch (query.kind) {
    case QueryKind::kMarginal: {
      check_concept(query.k, num_concepts);
      check_label(query.label, num_classes);
      double t[2] = {0.0, 0.0};
      for (const Record& r : records) {
        if (r.label == query.label) t[r.concepts[query.k]] += 1.0;
      }
      return bit_table(query.k, t[0], t[1]);
    }
    case QueryKind::kJoint: {
      check_label(query.label, num_classes);
      if (num_concepts > 20) throw EnumerationLimit("joint table needs K <= 20");
      ProbTable t{concept_vars(num_concepts),
                  ProbTable::enumerate(std::vector<std::size_t>(num_concepts, 2)),
                  {}, true};
      t.probs.assign(t.rows.size(), 0.0);
      for (const Record& r : records) {
        if (r.label != query.label) continue;
        std::size_t idx = 0;
        for (auto b : r.concepts) idx = (idx << 1) | b;
        t.probs[idx] += 1.0;
      }
      t.normalize();
      return t;
    }
    case QueryKind::kCondClass:
    case QueryKind::kCond: {
      check_pair(query.k, query.k_prime, query.value, num_concepts);
      const bool by_class = query.kind == QueryKind::kCondClass;
      if (by_class) check_label(query.label, num_classes);
      double t[2] = {0.0, 0.0};
      for (const Record& r : records) {
        if (by_class && r.label != query.label) continue;
        if (r.concepts[query.k_prime] != query.value) continue;
        t[r.concepts[query.k]] += 1.0;
      }
      return bit_table(query.k, t[0], t[1]);
    }
    default:
      throw InvalidArgument("instance-level queries have no counting form");
  }
}

ProbTable hard_estimates(const Theta& theta, const data::Dataset& dataset,
                         const Query& query, const EstimatorConfig& config) {
  const auto preds = infer::predict_all(theta, dataset, config.inference);
  std::vector<Record> records;
  records.reserve(preds.size());
  for (const auto& p : preds) records.push_back({p.concepts, p.label});
  return count_frequencies(records, theta.config().num_concepts,
                           theta.config().num_classes, query);
}

ProbTable empirical_estimates(const data::Dataset& dataset, const Query& query) {
  std::vector<Record> records;
  records.reserve(dataset.size());
  for (const auto& e : dataset.examples) records.push_back({e.concepts, e.label});
  return count_frequencies(records, dataset.num_concepts, dataset.num_classes,
                           query);
}

ProbTable estimate(const Theta& theta, const data::Dataset& dataset,
                   const Query& query, const EstimatorConfig& config) {
  switch (query.kind) {
    case QueryKind::kJointMissing:
      return infer::intervene_exact(theta, query.features, query.mask,
                                    config.inference);
    case QueryKind::kMissingConcept:
      return infer::missing_concept_posterior(theta, query.features,
                                              query.mask, config.inference);
    case QueryKind::kClassGivenConcept:
      return wrap_class_vector(infer::class_given_concept(
          theta, query.features, query.k, query.value, config.inference));
    default:
      break;
  }
  if (config.mode == EstimateMode::kHard) {
    return hard_estimates(theta, dataset, query, config);
  }
  switch (query.kind) {
    case QueryKind::kMarginal:
      check_concept(query.k, theta.config().num_concepts);
      return marginal_concept_importance(theta, dataset, query.label,
                                         config)[query.k];
    case QueryKind::kJoint: {
      ConceptBits zeros(theta.config().num_concepts, 0);
      auto j = joint_concept_importance(theta, dataset, query.label, zeros,
                                        config);
      if (!j.table) {
        throw EnumerationLimit("joint table needs K <= exact limit");
      }
      return *j.table;
    }
    case QueryKind::kCondClass:
      return concept_conditional_given_class(theta, dataset, query.k,
                                             query.k_prime, query.value,
                                             query.label, config);
    case QueryKind::kCond:
      return concept_conditional(theta, dataset, query.k, query.k_prime,
                                 query.value, config);
    default:
      throw InvalidArgument("unknown query kind");
  }
}

}  // namespace ecbm::interpret
