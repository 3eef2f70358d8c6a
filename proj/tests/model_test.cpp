// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "ecbm/error.hpp"
#include "ecbm/model.hpp"
#include "test_util.hpp"

namespace ecbm {
namespace {

using testing::bits_of;
using testing::onehot;
using testing::random_theta;
using testing::random_vector;
using testing::small_config;
using Vec = std::vector<double>;

// Straight-line reference implementation with plain loops.
struct Reference {
  const Theta& t;
  const DenseArray& p(const char* n) const { return t.param(n); }

  static Vec affine(const Vec& in, const DenseArray& w, const DenseArray& b) {
    Vec out(w.cols());
    for (std::size_t j = 0; j < w.cols(); ++j) {
      out[j] = b[j];
      for (std::size_t i = 0; i < in.size(); ++i) out[j] += in[i] * w.at(i, j);
    }
    return out;
  }
  static Vec normalized(Vec v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n < 1e-12) n = 1e-12;
    for (double& x : v) x /= n;
    return v;
  }
  static double head(const Vec& a, const Vec& e, const DenseArray& w,
                     const DenseArray& b) {
    double s = b[0];
    for (std::size_t i = 0; i < a.size(); ++i) {
      s += std::max(0.0, a[i] * e[i] + a[i]) * w[i];
    }
    return s;
  }
  Vec features(const Vec& x) const {
    Vec h = affine(x, p(params::kFeatureW1), p(params::kFeatureB1));
    for (double& v : h) v = std::max(0.0, v);
    return affine(h, p(params::kFeatureW2), p(params::kFeatureB2));
  }
  Vec class_mix(const Vec& yw) const {
    const DenseArray& u = p(params::kClassEmbed);
    Vec out(u.cols(), 0.0);
    for (std::size_t m = 0; m < u.rows(); ++m) {
      for (std::size_t j = 0; j < u.cols(); ++j) out[j] += yw[m] * u.at(m, j);
    }
    return out;
  }
  Vec concept_mix(std::size_t k, double c) const {
    const DenseArray& pos = p(params::kConceptPos);
    const DenseArray& neg = p(params::kConceptNeg);
    Vec out(pos.cols());
    for (std::size_t j = 0; j < pos.cols(); ++j) {
      out[j] = c * pos.at(k, j) + (1 - c) * neg.at(k, j);
    }
    return out;
  }
  double class_energy(const Vec& x, const Vec& yw) const {
    const Vec h = affine(features(x), p(params::kClassFcW), p(params::kClassFcB));
    return head(h, normalized(class_mix(yw)), p(params::kClassOutW),
                p(params::kClassOutB));
  }
  double concept_energy(const Vec& x, std::size_t k, double c) const {
    const Vec h =
        affine(features(x), p(params::kConceptFcW), p(params::kConceptFcB));
    return head(h, normalized(concept_mix(k, c)), p(params::kConceptOutW),
                p(params::kConceptOutB));
  }
  double global_energy(const Vec& cw, const Vec& yw) const {
    Vec flat;
    for (std::size_t k = 0; k < cw.size(); ++k) {
      const Vec m = concept_mix(k, cw[k]);
      flat.insert(flat.end(), m.begin(), m.end());
    }
    const Vec v = normalized(
        affine(flat, p(params::kGlobalProjW), p(params::kGlobalProjB)));
    return head(class_mix(yw), v, p(params::kGlobalOutW), p(params::kGlobalOutB));
  }
};

TEST(Model, ZeroWeightsGiveBiasFeatures) {
  Theta t(small_config(3, 2, 4, 5));
  DenseArray& b2 = t.param(params::kFeatureB2);
  for (std::size_t i = 0; i < b2.size(); ++i) b2[i] = 0.5 * static_cast<double>(i) - 1;
  const Vec z = extract_features(t, Vec{1.0, -2.0, 3.0, 0.5});
  ASSERT_EQ(z.size(), 5U);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], b2[i]);
}

TEST(Model, FeaturesAreBitIdenticalAcrossCalls) {
  const Theta t = Theta::initialize(small_config(3, 2), 11);
  const Vec x{0.1, 0.2, -0.3, 0.4, 0.5};
  EXPECT_EQ(extract_features(t, x), extract_features(t, x));
  EXPECT_EQ(Theta::initialize(small_config(3, 2), 11), t);
  EXPECT_FALSE(Theta::initialize(small_config(3, 2), 12) == t);
}

TEST(Model, EnergiesMatchStraightLineRecomputation) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Theta t = random_theta(small_config(4, 3), seed);
    const Reference ref{t};
    std::mt19937_64 rng(seed + 100);
    const Vec x = random_vector(5, rng);
    const Vec z = extract_features(t, x);
    const Vec rz = ref.features(x);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_NEAR(z[i], rz[i], 1e-12);
    std::uniform_real_distribution<double> u(0, 1);
    Vec yw{u(rng), u(rng), u(rng)};
    const double s = std::accumulate(yw.begin(), yw.end(), 0.0);
    for (double& v : yw) v /= s;
    Vec cw{u(rng), u(rng), u(rng), u(rng)};
    EXPECT_NEAR(class_energy(t, x, yw), ref.class_energy(x, yw), 1e-12);
    for (std::size_t k = 0; k < 4; ++k) {
      EXPECT_NEAR(concept_energy(t, x, k, cw[k]), ref.concept_energy(x, k, cw[k]),
                  1e-12);
    }
    EXPECT_NEAR(global_energy(t, cw, yw), ref.global_energy(cw, yw), 1e-12);
  }
}

TEST(Model, ConceptEmbeddingEndpointsAndMidpoint) {
  const Theta t = random_theta(small_config(3, 2), 4);
  const DenseArray& pos = t.param(params::kConceptPos);
  const DenseArray& neg = t.param(params::kConceptNeg);
  for (std::size_t k = 0; k < 3; ++k) {
    const Vec one = concept_embedding(t, k, 1.0);
    const Vec zero = concept_embedding(t, k, 0.0);
    const Vec half = concept_embedding(t, k, 0.5);
    for (std::size_t j = 0; j < one.size(); ++j) {
      EXPECT_EQ(one[j], pos.at(k, j));
      EXPECT_EQ(zero[j], neg.at(k, j));
      EXPECT_NEAR(half[j], (one[j] + zero[j]) / 2, 1e-15);
    }
  }
}

TEST(Model, ConceptEmbeddingRejectsBadArguments) {
  const Theta t = random_theta(small_config(3, 2), 4);
  EXPECT_THROW(concept_embedding(t, 3, 0.5), InvalidArgument);
  EXPECT_THROW(concept_embedding(t, 0, 1.5), InvalidArgument);
  EXPECT_THROW(concept_embedding(t, 0, -0.1), InvalidArgument);
}

TEST(Model, OneHotClassUsesPureEmbedding) {
  const Theta t = random_theta(small_config(2, 3), 8);
  const Reference ref{t};
  const Vec x{1, 2, 3, 4, 5};
  for (std::size_t m = 0; m < 3; ++m) {
    EXPECT_NEAR(class_energy(t, x, onehot(3, m)), ref.class_energy(x, onehot(3, m)),
                1e-12);
  }
}

TEST(Model, ZeroFinalLayerGivesZeroEnergy) {
  Theta t = random_theta(small_config(3, 2), 2);
  for (const char* n : {params::kClassOutW, params::kClassOutB, params::kConceptOutW,
                        params::kConceptOutB, params::kGlobalOutW,
                        params::kGlobalOutB}) {
    for (double& v : t.param(n).values()) v = 0.0;
  }
  const Vec x{0.3, -1, 2, 0.1, 0};
  EXPECT_EQ(class_energy(t, x, Vec{0.4, 0.6}), 0.0);
  EXPECT_EQ(concept_energy(t, x, 1, 0.3), 0.0);
  EXPECT_EQ(global_energy(t, Vec{1, 0, 0.5}, Vec{0, 1}), 0.0);
  EXPECT_EQ(joint_energy(t, x, Vec{1, 0, 1}, Vec{1, 0}).e_joint, 0.0);
}

TEST(Model, JointEnergyRecombinesParts) {
  Theta t = random_theta(small_config(4, 3), 5);
  t.set_lambdas(0.3, 0.3, 0.7, 0.05);
  std::mt19937_64 rng(1);
  const Vec x = random_vector(5, rng);
  const Vec cw{1, 0, 0.25, 0.5};
  const Vec yw{0.2, 0.3, 0.5};
  const EnergyBreakdown e = joint_energy(t, x, cw, yw);
  ASSERT_EQ(e.e_concept.size(), 4U);
  double sum = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    EXPECT_NEAR(e.e_concept[k], concept_energy(t, x, k, cw[k]), 1e-12);
    sum += e.e_concept[k];
  }
  EXPECT_NEAR(e.e_class, class_energy(t, x, yw), 1e-12);
  EXPECT_NEAR(e.e_global, global_energy(t, cw, yw), 1e-12);
  EXPECT_NEAR(e.e_joint, e.e_class + 0.7 * sum + 0.05 * e.e_global, 1e-12);
}

TEST(Model, ClassPosteriorIsSoftmaxOfNegatedEnergies) {
  const Theta t = random_theta(small_config(2, 4), 6);
  const Vec x{1, -1, 0.5, 2, 0};
  const Vec p = class_posterior(t, x);
  double z = 0, s = 0;
  Vec w(4);
  for (std::size_t m = 0; m < 4; ++m) {
    w[m] = std::exp(-class_energy(t, x, onehot(4, m)));
    z += w[m];
  }
  for (std::size_t m = 0; m < 4; ++m) {
    EXPECT_NEAR(p[m], w[m] / z, 1e-12);
    s += p[m];
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
}

TEST(Model, BatchedEnergiesMatchSingleCalls) {
  const Theta t = random_theta(small_config(3, 2), 9);
  const auto ds = testing::random_dataset(3, 2, 5, 7, 3);
  const auto batch = example_energies(t, ds.feature_matrix());
  ASSERT_EQ(batch.size(), 7U);
  for (std::size_t i = 0; i < 7; ++i) {
    const Vec& x = ds.examples[i].features;
    for (std::size_t m = 0; m < 2; ++m) {
      EXPECT_NEAR(batch[i].class_energy[m], class_energy(t, x, onehot(2, m)), 1e-12);
    }
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(batch[i].concept_energy[k][0], concept_energy(t, x, k, 0.0), 1e-12);
      EXPECT_NEAR(batch[i].concept_energy[k][1], concept_energy(t, x, k, 1.0), 1e-12);
    }
  }
  std::vector<ConceptBits> cs;
  for (std::size_t c = 0; c < 8; ++c) cs.push_back(bits_of(c, 3));
  const DenseArray table = global_energy_table(t, cs);
  for (std::size_t c = 0; c < 8; ++c) {
    for (std::size_t m = 0; m < 2; ++m) {
      EXPECT_NEAR(table.at(c, m),
                  global_energy(t, testing::bits_to_weights(cs[c]), onehot(2, m)),
                  1e-12);
    }
  }
}

TEST(Model, RejectsWrongDimensionsAndWeights) {
  const Theta t = random_theta(small_config(3, 2), 1);
  EXPECT_THROW(extract_features(t, Vec{1, 2}), ShapeError);
  EXPECT_THROW(class_energy(t, Vec(5, 0.0), Vec{0.5, 0.6}), InvalidArgument);
  EXPECT_THROW(class_energy(t, Vec(5, 0.0), Vec{1.0}), ShapeError);
  EXPECT_THROW(global_energy(t, Vec{0, 2, 0}, Vec{1, 0}), InvalidArgument);
}

TEST(Model, ConfigValidation) {
  EXPECT_THROW(Theta(small_config(0, 2)), InvalidArgument);
  EXPECT_THROW(Theta(small_config(2, 1)), InvalidArgument);
  ModelConfig c = small_config(2, 2);
  c.dropout = 1.0;
  EXPECT_THROW(Theta{c}, InvalidArgument);
  c.dropout = 0.2;
  c.lambda_global = -1;
  EXPECT_THROW(Theta{c}, InvalidArgument);
}

TEST(Model, InitializationScales) {
  const ModelConfig c = small_config(4, 3, 9, 8);
  const Theta t = Theta::initialize(c, 3);
  for (double v : t.param(params::kConceptPos).values()) EXPECT_LT(std::abs(v), 0.1);
  const double bound = 1.0 / std::sqrt(9.0);
  for (double v : t.param(params::kFeatureW1).values()) EXPECT_LE(std::abs(v), bound);
  EXPECT_TRUE(t.all_finite());
}

}  // namespace
}  // namespace ecbm
