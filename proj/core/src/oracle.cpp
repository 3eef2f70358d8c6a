// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include <array>
#include <cmath>
#include <functional>

#include "ecbm/error.hpp"
#include "ecbm/interpret.hpp"

namespace ecbm::interpret {
namespace {

std::vector<double> onehot(std::size_t m, std::size_t y) {
  std::vector<double> v(m, 0.0);
  v[y] = 1.0;
  return v;
}

std::vector<double> bits_of(std::size_t c, std::size_t k) {
  std::vector<double> v(k);
  for (std::size_t i = 0; i < k; ++i) v[i] = static_cast<double>((c >> i) & 1U);
  return v;
}

std::size_t bit(std::size_t c, std::size_t k) { return (c >> k) & 1U; }

}  // namespace

BruteForceOracle::BruteForceOracle(const Theta& theta,
                                   const data::Dataset& dataset)
    : theta_(theta),
      num_examples_(dataset.size()),
      num_concepts_(theta.config().num_concepts),
      num_classes_(theta.config().num_classes) {
  if (num_concepts_ > 16 || num_classes_ > 64) {
    throw EnumerationLimit("oracle needs K <= 16 and M <= 64");
  }
  const std::size_t n_c = std::size_t{1} << num_concepts_;
  // p(y | c) from the global head.
  std::vector<double> p_y_given_c(n_c * num_classes_);
  for (std::size_t c = 0; c < n_c; ++c) {
    const auto w = bits_of(c, num_concepts_);
    double z = 0.0;
    for (std::size_t y = 0; y < num_classes_; ++y) {
      const double e = std::exp(-global_energy(theta, w, onehot(num_classes_, y)));
      p_y_given_c[c * num_classes_ + y] = e;
      z += e;
    }
    for (std::size_t y = 0; y < num_classes_; ++y) {
      p_y_given_c[c * num_classes_ + y] /= z;
    }
  }
  joint_.assign(num_examples_ * n_c * num_classes_, 0.0);
  for (std::size_t i = 0; i < num_examples_; ++i) {
    const auto& x = dataset.examples[i].features;
    std::vector<std::array<double, 2>> p_bit(num_concepts_);
    for (std::size_t k = 0; k < num_concepts_; ++k) {
      const double e0 = std::exp(-concept_energy(theta, x, k, 0.0));
      const double e1 = std::exp(-concept_energy(theta, x, k, 1.0));
      p_bit[k] = {e0 / (e0 + e1), e1 / (e0 + e1)};
    }
    for (std::size_t c = 0; c < n_c; ++c) {
      double p_c = 1.0 / static_cast<double>(num_examples_);
      for (std::size_t k = 0; k < num_concepts_; ++k) p_c *= p_bit[k][bit(c, k)];
      for (std::size_t y = 0; y < num_classes_; ++y) {
        joint_[(i * n_c + c) * num_classes_ + y] =
            p_c * p_y_given_c[c * num_classes_ + y];
      }
    }
  }
  class_freq_ = dataset.class_frequencies();
}

double BruteForceOracle::joint(std::size_t example, std::size_t concepts,
                               std::size_t label) const {
  const std::size_t n_c = std::size_t{1} << num_concepts_;
  return joint_[(example * n_c + concepts) * num_classes_ + label];
}

ProbTable BruteForceOracle::answer(const Query& query) const {
  const std::size_t n_c = std::size_t{1} << num_concepts_;
  // Sum of q over every (x, c) with c passing `keep`, at class y.
  auto total = [&](std::size_t y, const std::function<bool(std::size_t)>& keep) {
    double s = 0.0;
    for (std::size_t i = 0; i < num_examples_; ++i) {
      for (std::size_t c = 0; c < n_c; ++c) {
        if (keep(c)) s += joint(i, c, y);
      }
    }
    return s;
  };
  auto any = [](std::size_t) { return true; };
  auto bit_rows = [&](std::size_t k, double p0, double p1) {
    return ProbTable{{concept_var(k)}, {{0}, {1}}, {p0, p1}, true};
  };

  switch (query.kind) {
    case QueryKind::kMarginal: {
      const double z = total(query.label, any);
      double p[2];
      for (std::size_t v = 0; v < 2; ++v) {
        p[v] = total(query.label, [&](std::size_t c) {
                 return bit(c, query.k) == v;
               }) / z;
      }
      return bit_rows(query.k, p[0], p[1]);
    }
    case QueryKind::kJoint: {
      const double z = total(query.label, any);
      ProbTable t;
      for (std::size_t k = 0; k < num_concepts_; ++k) {
        t.variables.push_back(concept_var(k));
      }
      t.rows = ProbTable::enumerate(std::vector<std::size_t>(num_concepts_, 2));
      for (const Assignment& a : t.rows) {
        std::size_t c = 0;
        for (std::size_t k = 0; k < num_concepts_; ++k) c |= a[k] << k;
        t.probs.push_back(
            total(query.label, [&](std::size_t cc) { return cc == c; }) / z);
      }
      return t;
    }
    case QueryKind::kCondClass: {
      const auto given = [&](std::size_t c) {
        return bit(c, query.k_prime) == query.value;
      };
      const double z = total(query.label, given);
      double p[2];
      for (std::size_t v = 0; v < 2; ++v) {
        p[v] = total(query.label, [&](std::size_t c) {
                 return given(c) && bit(c, query.k) == v;
               }) / z;
      }
      return bit_rows(query.k, p[0], p[1]);
    }
    case QueryKind::kCond: {
      const auto given = [&](std::size_t c) {
        return bit(c, query.k_prime) == query.value;
      };
      double num[2] = {0.0, 0.0}, den = 0.0;
      for (std::size_t y = 0; y < num_classes_; ++y) {
        const double z = total(y, any);
        den += class_freq_[y] * total(y, given) / z;
        for (std::size_t v = 0; v < 2; ++v) {
          num[v] += class_freq_[y] *
                    total(y, [&](std::size_t c) {
                      return given(c) && bit(c, query.k) == v;
                    }) /
                    z;
        }
      }
      return bit_rows(query.k, num[0] / den, num[1] / den);
    }
    default:
      return instance(query);
  }
}

ProbTable BruteForceOracle::instance(const Query& query) const {
  const auto& x = query.features;
  auto consistent = [&](std::size_t c) {
    for (const auto& [k, b] : query.mask) {
      if (bit(c, k) != b) return false;
    }
    return true;
  };
  auto e_joint = [&](std::size_t c, std::size_t y) {
    return joint_energy(theta_, x, bits_of(c, num_concepts_),
                        onehot(num_classes_, y))
        .e_joint;
  };
  // Concept configurations in lexicographic order of (c0, c1, ...).
  std::vector<std::size_t> order;
  for (const Assignment& a :
       ProbTable::enumerate(std::vector<std::size_t>(num_concepts_, 2))) {
    std::size_t c = 0;
    for (std::size_t k = 0; k < num_concepts_; ++k) c |= a[k] << k;
    order.push_back(c);
  }

  switch (query.kind) {
    case QueryKind::kJointMissing:
    case QueryKind::kMissingConcept: {
      ProbTable full;
      for (std::size_t k = 0; k < num_concepts_; ++k) {
        if (!query.mask.count(k)) full.variables.push_back(concept_var(k));
      }
      full.variables.push_back("y");
      double z = 0.0;
      std::vector<std::size_t> row_config;
      for (std::size_t c : order) {
        if (!consistent(c)) continue;
        for (std::size_t y = 0; y < num_classes_; ++y) {
          Assignment a;
          for (std::size_t k = 0; k < num_concepts_; ++k) {
            if (!query.mask.count(k)) a.push_back(bit(c, k));
          }
          a.push_back(y);
          row_config.push_back(c);
          const double w = std::exp(-e_joint(c, y));
          full.rows.push_back(a);
          full.probs.push_back(w);
          z += w;
        }
      }
      for (double& p : full.probs) p /= z;
      if (query.kind == QueryKind::kJointMissing) return full;
      ProbTable out;
      for (std::size_t k = 0; k < num_concepts_; ++k) {
        if (!query.mask.count(k)) out.variables.push_back(concept_var(k));
      }
      for (std::size_t c : order) {
        if (!consistent(c)) continue;
        Assignment a;
        for (std::size_t k = 0; k < num_concepts_; ++k) {
          if (!query.mask.count(k)) a.push_back(bit(c, k));
        }
        double p = 0.0;
        for (std::size_t r = 0; r < full.rows.size(); ++r) {
          if (row_config[r] == c) p += full.probs[r];
        }
        out.rows.push_back(a);
        out.probs.push_back(p);
      }
      return out;
    }
    case QueryKind::kClassGivenConcept: {
      std::vector<double> acc(num_classes_, 0.0);
      for (std::size_t c : order) {
        if (bit(c, query.k) != query.value) continue;
        std::vector<double> w(num_classes_);
        double z = 0.0;
        for (std::size_t y = 0; y < num_classes_; ++y) {
          w[y] = std::exp(-e_joint(c, y));
          z += w[y];
        }
        for (std::size_t y = 0; y < num_classes_; ++y) acc[y] += w[y] / z;
      }
      double total = 0.0;
      for (double v : acc) total += v;
      ProbTable out{{"y"}, {}, {}, true};
      for (std::size_t y = 0; y < num_classes_; ++y) {
        out.rows.push_back({y});
        out.probs.push_back(acc[y] / total);
      }
      return out;
    }
    default:
      throw InvalidArgument("unknown query kind");
  }
}

ProbTable brute_force_oracle(const Theta& theta, const data::Dataset& dataset,
                             const Query& query) {
  return BruteForceOracle(theta, dataset).answer(query);
}

}  // namespace ecbm::interpret
