// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <iostream>

#include "ecbm/error.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/training.hpp"
#include "test_util.hpp"

namespace ecbm::interpret {
namespace {

using testing::bits_of;
using testing::bits_to_weights;
using testing::onehot;
using testing::random_dataset;
using testing::random_theta;
using testing::small_config;

Theta zero_heads(Theta t) {
  for (const char* n : {params::kClassOutW, params::kClassOutB, params::kConceptOutW,
                        params::kConceptOutB, params::kGlobalOutW,
                        params::kGlobalOutB}) {
    for (double& v : t.param(n).values()) v = 0.0;
  }
  return t;
}

void expect_tables_near(const ProbTable& a, const ProbTable& b, double tol) {
  ASSERT_EQ(a.variables, b.variables);
  ASSERT_EQ(a.rows, b.rows);
  ASSERT_EQ(a.defined, b.defined);
  for (std::size_t r = 0; r < a.size(); ++r) EXPECT_NEAR(a.probs[r], b.probs[r], tol);
}

TEST(Oracle, JointMatchesHandFormula) {
  const Theta t = random_theta(small_config(2, 2), 3);
  const auto ds = random_dataset(2, 2, 5, 2, 1);
  const BruteForceOracle oracle(t, ds);
  for (std::size_t i = 0; i < 2; ++i) {
    const auto& x = ds.examples[i].features;
    for (std::size_t v = 0; v < 4; ++v) {
      const ConceptBits c = bits_of(v, 2);
      double pc = 0.5;
      for (std::size_t k = 0; k < 2; ++k) {
        const double a = std::exp(-concept_energy(t, x, k, c[k]));
        const double b = std::exp(-concept_energy(t, x, k, 1.0 - c[k]));
        pc *= a / (a + b);
      }
      const double g0 = std::exp(-global_energy(t, bits_to_weights(c), onehot(2, 0)));
      const double g1 = std::exp(-global_energy(t, bits_to_weights(c), onehot(2, 1)));
      EXPECT_NEAR(oracle.joint(i, v, 0), pc * g0 / (g0 + g1), 1e-14);
      EXPECT_NEAR(oracle.joint(i, v, 1), pc * g1 / (g0 + g1), 1e-14);
    }
  }
}

class SoftVsOracle : public ::testing::TestWithParam<std::pair<std::size_t, std::size_t>> {};

TEST_P(SoftVsOracle, EveryEstimatorMatches) {
  const auto [k, m] = GetParam();
  const Theta t = random_theta(small_config(k, m), 100 * k + m);
  const auto ds = random_dataset(k, m, 5, 12, k + m);
  const BruteForceOracle oracle(t, ds);
  for (std::size_t y = 0; y < m; ++y) {
    const auto marg = marginal_concept_importance(t, ds, y);
    for (std::size_t j = 0; j < k; ++j) {
      Query q = testing::query(QueryKind::kMarginal, y, j);
      expect_tables_near(marg[j], oracle.answer(q), 1e-9);
    }
    Query jq = testing::query(QueryKind::kJoint, y);
    expect_tables_near(estimate(t, ds, jq), oracle.answer(jq), 1e-9);
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) {
        if (a == b) continue;
        for (std::uint8_t v : {0, 1}) {
          Query q = testing::query(QueryKind::kCondClass, y, a, b, v);
          expect_tables_near(concept_conditional_given_class(t, ds, a, b, v, y),
                             oracle.answer(q), 1e-9);
          if (y == 0) {
            Query c = testing::query(QueryKind::kCond, 0, a, b, v);
            expect_tables_near(concept_conditional(t, ds, a, b, v), oracle.answer(c),
                               1e-9);
          }
        }
      }
    }
  }
  std::mt19937_64 rng(k);
  for (int rep = 0; rep < 3; ++rep) {
    Query q;
    q.features = testing::random_vector(5, rng);
    q.mask = {{static_cast<std::size_t>(rep) % k, static_cast<std::uint8_t>(rep & 1)}};
    for (QueryKind kind : {QueryKind::kJointMissing, QueryKind::kMissingConcept}) {
      q.kind = kind;
      expect_tables_near(estimate(t, ds, q), oracle.answer(q), 1e-9);
    }
    q.kind = QueryKind::kClassGivenConcept;
    q.k = static_cast<std::size_t>(rep) % k;
    q.value = static_cast<std::uint8_t>(rep & 1);
    expect_tables_near(estimate(t, ds, q), oracle.answer(q), 1e-9);
  }
}

INSTANTIATE_TEST_SUITE_P(Sizes, SoftVsOracle,
                         ::testing::Values(std::make_pair(2U, 2U), std::make_pair(3U, 2U),
                                           std::make_pair(3U, 4U),
                                           std::make_pair(4U, 3U)));

TEST(Interpret, SingleConceptMarginalSumsToOne) {
  const Theta t = random_theta(small_config(1, 3), 1);
  const auto ds = random_dataset(1, 3, 5, 5, 1);
  for (std::size_t y = 0; y < 3; ++y) {
    const auto m = marginal_concept_importance(t, ds, y);
    ASSERT_EQ(m.size(), 1U);
    EXPECT_NEAR(m[0].probs[0] + m[0].probs[1], 1.0, 1e-12);
  }
}

TEST(Interpret, FlatEnergiesGiveUniformTables) {
  const Theta t = zero_heads(random_theta(small_config(3, 2), 1));
  const auto ds = random_dataset(3, 2, 5, 6, 1);
  const auto j = joint_concept_importance(t, ds, 1, {0, 1, 0});
  ASSERT_TRUE(j.table);
  for (double p : j.table->probs) EXPECT_NEAR(p, 1.0 / 8, 1e-15);
  const ProbTable c = concept_conditional_given_class(t, ds, 0, 2, 1, 0);
  EXPECT_NEAR(c.probs[0], 0.5, 1e-15);
  const ProbTable u = concept_conditional(t, ds, 1, 0, 0);
  EXPECT_NEAR(u.probs[1], 0.5, 1e-15);
}

TEST(Interpret, JointScoreIsUnnormalizedRatio) {
  const Theta t = random_theta(small_config(2, 2), 5);
  const auto ds = random_dataset(2, 2, 5, 3, 2);
  const BruteForceOracle oracle(t, ds);
  const ConceptBits c{1, 0};
  const std::size_t v = 1;  // bit k = concept k
  double num = 0, den = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    num += oracle.joint(i, v, 1);
    den += std::exp(-class_energy(t, ds.examples[i].features, onehot(2, 1))) / 3;
  }
  EXPECT_NEAR(joint_concept_importance(t, ds, 1, c).score, num / den, 1e-12);
  EstimatorConfig small;
  small.exact_limit = 1;
  const auto beyond = joint_concept_importance(t, ds, 1, c, small);
  EXPECT_FALSE(beyond.table);
  EXPECT_NEAR(beyond.score, num / den, 1e-12);
}

TEST(Interpret, ShiftingOneHeadChangesNoTable) {
  const Theta base = random_theta(small_config(3, 3), 12);
  const auto ds = random_dataset(3, 3, 5, 8, 4);
  for (const char* bias : {params::kClassOutB, params::kConceptOutB, params::kGlobalOutB}) {
    Theta shifted = base;
    shifted.param(bias)[0] += 7.3;
    for (std::size_t y = 0; y < 3; ++y) {
      const auto a = marginal_concept_importance(base, ds, y);
      const auto b = marginal_concept_importance(shifted, ds, y);
      for (std::size_t k = 0; k < 3; ++k) expect_tables_near(a[k], b[k], 1e-9);
      Query j = testing::query(QueryKind::kJoint, y);
      expect_tables_near(estimate(base, ds, j), estimate(shifted, ds, j), 1e-9);
    }
    expect_tables_near(concept_conditional(base, ds, 0, 1, 1),
                       concept_conditional(shifted, ds, 0, 1, 1), 1e-9);
  }
}

TEST(Interpret, MonteCarloApproachesExactBeyondLimit) {
  const Theta t = random_theta(small_config(4, 2), 8, 0.4);
  const auto ds = random_dataset(4, 2, 5, 10, 3);
  EstimatorConfig mc;
  mc.exact_limit = 2;
  mc.monte_carlo_samples = 1 << 15;
  mc.seed = 5;
  const auto exact = marginal_concept_importance(t, ds, 0);
  const auto approx = marginal_concept_importance(t, ds, 0, mc);
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(approx[k].probs[1], exact[k].probs[1], 0.02);
  }
  mc.monte_carlo_samples = 0;
  EXPECT_THROW(marginal_concept_importance(t, ds, 0, mc), EnumerationLimit);
}

TEST(Interpret, CountingFrequencies) {
  const std::vector<Record> recs{
      {{1, 1, 0}, 0}, {{1, 0, 0}, 0}, {{0, 1, 1}, 1}, {{1, 1, 1}, 1}};
  Query q = testing::query(QueryKind::kMarginal, 0, 0);
  EXPECT_EQ(count_frequencies(recs, 3, 2, q).probs[1], 1.0);
  q = testing::query(QueryKind::kCond, 0, 2, 1, 1);
  EXPECT_NEAR(count_frequencies(recs, 3, 2, q).probs[1], 2.0 / 3, 1e-15);
  q = testing::query(QueryKind::kCondClass, 1, 0, 1, 1);
  EXPECT_EQ(count_frequencies(recs, 3, 2, q).probs[1], 0.5);
  q = testing::query(QueryKind::kJoint, 1);
  const ProbTable j = count_frequencies(recs, 3, 2, q);
  EXPECT_EQ(j.at({0, 1, 1}), 0.5);
  EXPECT_EQ(j.at({1, 1, 1}), 0.5);
  EXPECT_EQ(j.at({0, 0, 0}), 0.0);
}

TEST(Interpret, EmptyConditioningCellIsUndefined) {
  const std::vector<Record> recs{{{0, 0}, 0}, {{1, 0}, 1}};
  Query q = testing::query(QueryKind::kCond, 0, 0, 1, 1);
  const ProbTable t = count_frequencies(recs, 2, 2, q);
  EXPECT_FALSE(t.defined);
  EXPECT_TRUE(std::isnan(t.probs[0]));
}

TEST(Interpret, HardModeCountsRoundedPredictions) {
  const Theta t = random_theta(small_config(3, 2), 2);
  const auto ds = random_dataset(3, 2, 5, 20, 6);
  EstimatorConfig hard;
  hard.mode = EstimateMode::kHard;
  const auto preds = infer::predict_all(t, ds);
  Query q = testing::query(QueryKind::kMarginal, 1, 2);
  double n = 0, ones = 0;
  for (const auto& p : preds) {
    if (p.label != 1) continue;
    n += 1;
    ones += p.concepts[2];
  }
  const ProbTable got = estimate(t, ds, q, hard);
  if (n == 0) {
    EXPECT_FALSE(got.defined);
  } else {
    EXPECT_NEAR(got.probs[1], ones / n, 1e-15);
  }
}

TEST(Interpret, RejectsBadArguments) {
  const Theta t = random_theta(small_config(3, 2), 2);
  const auto ds = random_dataset(3, 2, 5, 4, 6);
  EXPECT_THROW(concept_conditional(t, ds, 1, 1, 0), InvalidArgument);
  EXPECT_THROW(concept_conditional(t, ds, 0, 3, 0), InvalidArgument);
  EXPECT_THROW(marginal_concept_importance(t, ds, 2), InvalidArgument);
  EXPECT_THROW(marginal_concept_importance(t, random_dataset(2, 2, 5, 4, 1), 0),
               ShapeError);
  data::Dataset empty = ds;
  empty.examples.clear();
  EXPECT_THROW(marginal_concept_importance(t, empty, 0), InvalidArgument);
}

TEST(Interpret, TrainedModelRecoversPrototypeFrequency) {
  data::GeneratorSpec spec;
  spec.num_concepts = 4;
  spec.num_classes = 2;
  spec.feature_dim = 12;
  spec.num_examples = 1500;
  spec.prototypes = {{1, 1, 0, 0}, {0, 1, 1, 0}};
  spec.epsilon = 0.05;
  const auto ds = data::generate(spec, 0);
  ModelConfig mc;
  mc.num_concepts = 4;
  mc.num_classes = 2;
  mc.feature_dim = 12;
  const auto r = train::train(Theta::initialize(mc, 0), ds, train::TrainConfig{});
  // Class 0 has c_0 = 1 in its prototype, so p(c_0 = 1 | y = 0) is 0.95.
  const auto m = marginal_concept_importance(r.theta, ds, 0);
  std::cout << "p(c0=1|y=0) soft estimate " << m[0].probs[1] << "\n";
  EXPECT_NEAR(m[0].probs[1], 0.95, 0.1);
}

}  // namespace
}  // namespace ecbm::interpret
