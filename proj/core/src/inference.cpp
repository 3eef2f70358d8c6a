// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/inference.hpp"

#include <cmath>

#include "ecbm/error.hpp"
#include "ecbm/graph.hpp"
#include "ecbm/parallel.hpp"

namespace ecbm::infer {

using diff::Graph;
using diff::NodeId;

namespace {

double sigmoid(double v) {
  if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> v) {
  const double lse = log_sum_exp(v);
  std::vector<double> p(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) p[i] = std::exp(v[i] - lse);
  return p;
}

// Relaxed joint energy of one example over (concept logits, class logits).
class RelaxedEnergy {
 public:
  RelaxedEnergy(const Theta& theta, std::span<const double> x,
                const InterventionMask& mask, double lambda_c, double lambda_g)
      : x_(DenseArray::row({x.begin(), x.end()})) {
    const ModelConfig& cfg = theta.config();
    const std::size_t k = cfg.num_concepts, m = cfg.num_classes;
    EnergyGraphBuilder b(graph_, cfg);
    NodeId xi = graph_.input("x", {1, cfg.feature_dim});
    NodeId cl = graph_.input("c_logits", {1, k});
    NodeId yl = graph_.input("y_logits", {1, m});
    NodeId free = graph_.input("free", {1, k});
    NodeId fixed = graph_.input("fixed", {1, k});
    NodeId c = graph_.add(graph_.mul(graph_.sigmoid(cl), free), fixed);
    NodeId y = graph_.softmax(yl);
    NodeId z = b.features(xi);
    NodeId e_class = b.class_energy(z, y);
    NodeId e_concept = b.concept_energies(z, c);
    NodeId e_global = b.global_energy(c, y);
    NodeId e_joint = graph_.add(
        e_class, graph_.add(graph_.scale(graph_.sum_last(e_concept), lambda_c),
                            graph_.scale(e_global, lambda_g)));
    graph_.mark_output("e_class", e_class);
    graph_.mark_output("e_concept", e_concept);
    graph_.mark_output("e_global", e_global);
    graph_.mark_output("e_joint", e_joint);

    free_ = DenseArray({1, k}, 1.0);
    fixed_ = DenseArray({1, k}, 0.0);
    for (const auto& [idx, bit] : mask) {
      free_[idx] = 0.0;
      fixed_[idx] = bit;
    }
    theta.bind(bindings_);
    bindings_.bind("x", x_).bind("free", free_).bind("fixed", fixed_);
  }

  diff::NamedArrays evaluate(const DenseArray& c, const DenseArray& y) {
    diff::Bindings b = bindings_;
    b.bind("c_logits", c).bind("y_logits", y);
    return diff::evaluate(graph_, b);
  }

  diff::GradientResult gradient(const DenseArray& c, const DenseArray& y) {
    diff::Bindings b = bindings_;
    b.bind("c_logits", c).bind("y_logits", y);
    return diff::gradient(graph_, b, "e_joint");
  }

  const DenseArray& free() const { return free_; }
  const DenseArray& fixed() const { return fixed_; }

 private:
  Graph graph_;
  DenseArray x_, free_, fixed_;
  diff::Bindings bindings_;
};

EnergyBreakdown breakdown(const diff::NamedArrays& out) {
  EnergyBreakdown e;
  e.e_class = out.at("e_class")[0];
  const auto ec = out.at("e_concept").values();
  e.e_concept.assign(ec.begin(), ec.end());
  e.e_global = out.at("e_global")[0];
  e.e_joint = out.at("e_joint")[0];
  return e;
}

Prediction run(const Theta& theta, std::span<const double> x,
               const InterventionMask& mask, const InferenceConfig& config) {
  config.validate();
  const ModelConfig& cfg = theta.config();
  if (x.size() != cfg.feature_dim) {
    throw ShapeError("features: expected " + std::to_string(cfg.feature_dim) +
                     " values, got " + std::to_string(x.size()));
  }
  check_mask(mask, cfg.num_concepts);
  const std::size_t k = cfg.num_concepts, m = cfg.num_classes;
  const auto [lc, lg] = inference_lambdas(theta, config);
  RelaxedEnergy energy(theta, x, mask, lc, lg);

  DenseArray c({1, k}, 0.0), y({1, m}, 0.0);
  if (config.warm_start) {
    const auto ex = example_energies(theta, DenseArray::row({x.begin(), x.end()}));
    for (std::size_t i = 0; i < k; ++i) {
      c[i] = ex[0].concept_energy[i][0] - ex[0].concept_energy[i][1];
    }
    for (std::size_t j = 0; j < m; ++j) y[j] = -ex[0].class_energy[j];
  }
  for (const auto& [idx, bit] : mask) c[idx] = 0.0;

  const std::size_t n = k + m;
  std::vector<double> m1(n, 0.0), m2(n, 0.0);
  std::size_t accepted = 0;
  diff::NamedArrays current;
  for (std::size_t it = 1; it <= config.max_iters; ++it) {
    diff::GradientResult gr;
    try {
      gr = energy.gradient(c, y);
    } catch (const NumericalError& e) {
      throw NumericalError("inference iteration " + std::to_string(it) + ": " +
                           e.what());
    }
    current = gr.outputs;
    const double e_now = current.at("e_joint")[0];
    const DenseArray& gc = gr.gradients.at("c_logits");
    const DenseArray& gy = gr.gradients.at("y_logits");
    std::vector<double> dir(n);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(it));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(it));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = i < k ? gc[i] : gy[i - k];
      m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g;
      m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g * g;
      dir[i] = (m1[i] / bc1) / (std::sqrt(m2[i] / bc2) + config.epsilon);
    }
    double step = config.step;
    bool descended = false;
    DenseArray c_new, y_new;
    diff::NamedArrays next;
    for (std::size_t h = 0; h <= config.max_halvings; ++h, step *= 0.5) {
      c_new = c;
      y_new = y;
      for (std::size_t i = 0; i < k; ++i) {
        if (energy.free()[i] != 0.0) c_new[i] -= step * dir[i];
      }
      for (std::size_t j = 0; j < m; ++j) y_new[j] -= step * dir[k + j];
      try {
        next = energy.evaluate(c_new, y_new);
      } catch (const NumericalError& e) {
        throw NumericalError("inference iteration " + std::to_string(it) +
                             ": " + e.what());
      }
      if (next.at("e_joint")[0] <= e_now) {
        descended = true;
        break;
      }
    }
    if (!descended) break;
    c = c_new;
    y = y_new;
    current = next;
    ++accepted;
    if (e_now - next.at("e_joint")[0] < config.tolerance) break;
  }
  if (current.empty()) current = energy.evaluate(c, y);

  Prediction p;
  p.iterations = accepted;
  p.state.c_logits.assign(c.values().begin(), c.values().end());
  p.state.y_logits.assign(y.values().begin(), y.values().end());
  p.state.concept_probs.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    p.state.concept_probs[i] =
        sigmoid(c[i]) * energy.free()[i] + energy.fixed()[i];
  }
  p.state.class_probs = softmax(y.values());
  p.concepts = round_concepts(p.state.concept_probs);
  p.label = argmax(p.state.class_probs);
  p.energies = breakdown(current);
  return p;
}

std::size_t count_free(const InterventionMask& mask, std::size_t k) {
  return k - mask.size();
}

}  // namespace

void InferenceConfig::validate() const {
  if (!(step >= 0.0) || !std::isfinite(step)) {
    throw InvalidArgument("inference: step must be finite and >= 0");
  }
  if (max_iters < 1) throw InvalidArgument("inference: max_iters must be >= 1");
  if (!(tolerance >= 0.0)) throw InvalidArgument("inference: tolerance < 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("inference: decay rates must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidArgument("inference: epsilon must be > 0");
  if ((lambda_concept && !(*lambda_concept >= 0.0)) ||
      (lambda_global && !(*lambda_global >= 0.0))) {
    throw InvalidArgument("inference: energy weights must be >= 0");
  }
}

std::pair<double, double> inference_lambdas(const Theta& theta,
                                            const InferenceConfig& config) {
  return {config.lambda_concept.value_or(theta.config().lambda_concept_inf),
          config.lambda_global.value_or(theta.config().lambda_global_inf)};
}

void check_mask(const InterventionMask& mask, std::size_t num_concepts) {
  for (const auto& [idx, bit] : mask) {
    if (idx >= num_concepts) {
      throw InvalidArgument("intervention index " + std::to_string(idx) +
                            " out of range [0, " +
                            std::to_string(num_concepts) + ")");
    }
    if (bit > 1) throw InvalidArgument("intervention bit must be 0 or 1");
  }
}

ConceptBits round_concepts(std::span<const double> probs) {
  ConceptBits out(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] >= 0.5;
  return out;
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

Prediction predict(const Theta& theta, std::span<const double> x,
                   const InferenceConfig& config) {
  return run(theta, x, {}, config);
}

Prediction intervene_gradient(const Theta& theta, std::span<const double> x,
                              const InterventionMask& mask,
                              const InferenceConfig& config) {
  return run(theta, x, mask, config);
}

std::vector<Prediction> predict_all(const Theta& theta,
                                    const data::Dataset& dataset,
                                    const InferenceConfig& config) {
  std::vector<Prediction> out(dataset.size());
  parallel_for(dataset.size(), [&](std::size_t i) {
    out[i] = predict(theta, dataset.examples[i].features, config);
  });
  return out;
}

namespace {

struct JointLogWeights {
  std::vector<std::string> vars;
  std::vector<Assignment> rows;
  std::vector<double> logw;
};

// Rows are grouped by concept configuration, M classes each.
JointLogWeights joint_log_weights(const Theta& theta, std::span<const double> x,
                                  const InterventionMask& mask,
                                  const InferenceConfig& config) {
  const ModelConfig& cfg = theta.config();
  const std::size_t k = cfg.num_concepts, m = cfg.num_classes;
  if (x.size() != cfg.feature_dim) {
    throw ShapeError("features: expected " + std::to_string(cfg.feature_dim) +
                     " values, got " + std::to_string(x.size()));
  }
  check_mask(mask, k);
  const std::size_t s = count_free(mask, k);
  if (s > config.max_exact_free) {
    throw EnumerationLimit(std::to_string(s) +
                           " free concepts exceed the exact limit of " +
                           std::to_string(config.max_exact_free) +
                           "; use gradient mode");
  }
  const auto [lc, lg] = inference_lambdas(theta, config);
  const ExampleEnergies ex =
      example_energies(theta, DenseArray::row({x.begin(), x.end()}))[0];

  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < k; ++i) {
    if (!mask.count(i)) free_idx.push_back(i);
  }
  const std::size_t n_c = std::size_t{1} << s;
  std::vector<ConceptBits> configs(n_c, ConceptBits(k, 0));
  for (std::size_t a = 0; a < n_c; ++a) {
    for (const auto& [idx, bit] : mask) configs[a][idx] = bit;
    for (std::size_t j = 0; j < s; ++j) {
      configs[a][free_idx[j]] = (a >> (s - 1 - j)) & 1U;
    }
  }
  const DenseArray eg = global_energy_table(theta, configs);

  std::vector<std::string> vars;
  for (std::size_t i : free_idx) vars.push_back(concept_var(i));
  vars.push_back("y");
  std::vector<Assignment> rows;
  std::vector<double> logw;
  rows.reserve(n_c * m);
  logw.reserve(n_c * m);
  for (std::size_t a = 0; a < n_c; ++a) {
    double e_concepts = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      e_concepts += ex.concept_energy[i][configs[a][i]];
    }
    for (std::size_t y = 0; y < m; ++y) {
      Assignment row;
      for (std::size_t i : free_idx) row.push_back(configs[a][i]);
      row.push_back(y);
      rows.push_back(std::move(row));
      logw.push_back(-(ex.class_energy[y] + lc * e_concepts + lg * eg.at(a, y)));
    }
  }
  return {std::move(vars), std::move(rows), std::move(logw)};
}

}  // namespace

ProbTable intervene_exact(const Theta& theta, std::span<const double> x,
                          const InterventionMask& mask,
                          const InferenceConfig& config) {
  JointLogWeights j = joint_log_weights(theta, x, mask, config);
  return ProbTable::from_log_weights(std::move(j.vars), std::move(j.rows),
                                     j.logw);
}

ProbTable missing_concept_posterior(const Theta& theta,
                                    std::span<const double> x,
                                    const InterventionMask& mask,
                                    const InferenceConfig& config) {
  const ProbTable joint = intervene_exact(theta, x, mask, config);
  std::vector<std::string> keep;
  for (std::size_t i = 0; i < theta.config().num_concepts; ++i) {
    if (!mask.count(i)) keep.push_back(concept_var(i));
  }
  return joint.marginal(keep);
}

std::vector<double> class_given_concept(const Theta& theta,
                                        std::span<const double> x,
                                        std::size_t k, std::uint8_t value,
                                        const InferenceConfig& config) {
  const std::size_t num_k = theta.config().num_concepts;
  const std::size_t m = theta.config().num_classes;
  if (k >= num_k) throw InvalidArgument("concept index out of range");
  const JointLogWeights j = joint_log_weights(theta, x, {{k, value}}, config);
  std::vector<double> acc(m, 0.0);
  for (std::size_t start = 0; start < j.logw.size(); start += m) {
    const std::span<const double> block(j.logw.data() + start, m);
    const double z = log_sum_exp(block);
    for (std::size_t y = 0; y < m; ++y) acc[y] += std::exp(block[y] - z);
  }
  double total = 0.0;
  for (double v : acc) total += v;
  for (double& v : acc) v /= total;
  return acc;
}

Marginals exact_marginals(const Theta& theta, std::span<const double> x,
                          const InterventionMask& mask,
                          const InferenceConfig& config) {
  const std::size_t k = theta.config().num_concepts;
  const ProbTable joint = intervene_exact(theta, x, mask, config);
  std::vector<std::size_t> free_idx;
  for (std::size_t i = 0; i < k; ++i) {
    if (!mask.count(i)) free_idx.push_back(i);
  }
  const std::size_t s = free_idx.size();
  Marginals out;
  out.concept_probs.assign(k, 0.0);
  out.class_probs.assign(theta.config().num_classes, 0.0);
  for (std::size_t r = 0; r < joint.size(); ++r) {
    for (std::size_t j = 0; j < s; ++j) {
      if (joint.rows[r][j]) out.concept_probs[free_idx[j]] += joint.probs[r];
    }
    out.class_probs[joint.rows[r][s]] += joint.probs[r];
  }
  for (const auto& [idx, bit] : mask) out.concept_probs[idx] = bit;
  return out;
}

}  // namespace ecbm::infer
