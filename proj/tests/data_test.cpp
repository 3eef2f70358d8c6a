// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "ecbm/data.hpp"
#include "ecbm/error.hpp"

namespace ecbm::data {
namespace {

GeneratorSpec small_spec() {
  GeneratorSpec s;
  s.num_concepts = 4;
  s.num_classes = 3;
  s.feature_dim = 6;
  s.num_examples = 50;
  return s;
}

TEST(Generator, NoNoiseGivesPrototypes) {
  GeneratorSpec s = small_spec();
  s.epsilon = 0.0;
  s.sigma = 0.0;
  const auto protos = resolve_prototypes(s);
  const DenseArray a = feature_map(s);
  const Dataset ds = generate(s, 3);
  for (const auto& e : ds.examples) {
    EXPECT_EQ(e.concepts, protos[e.label]);
    for (std::size_t r = 0; r < s.feature_dim; ++r) {
      double v = a.at(r, s.num_concepts + e.label);
      for (std::size_t j = 0; j < s.num_concepts; ++j) v += e.concepts[j] * a.at(r, j);
      EXPECT_DOUBLE_EQ(e.features[r], v);
    }
  }
}

TEST(Generator, SameSeedSameData) {
  const GeneratorSpec s = small_spec();
  EXPECT_EQ(generate(s, 11), generate(s, 11));
  EXPECT_NE(generate(s, 11).examples, generate(s, 12).examples);
  EXPECT_NE(generate(s, 11).generator_hash, generate(s, 12).generator_hash);
}

TEST(Generator, ClassFrequenciesAreUniform) {
  GeneratorSpec s;
  s.num_concepts = 3;
  s.num_classes = 4;
  s.feature_dim = 2;
  s.num_examples = 10000;
  const auto freq = generate(s, 0).class_frequencies();
  const double band = 3 * std::sqrt(0.25 * 0.75 / 10000);
  for (double p : freq) EXPECT_NEAR(p, 0.25, band);
}

TEST(Generator, CouplingsHoldInEveryExample) {
  GeneratorSpec s = small_spec();
  s.epsilon = 0.3;
  s.couplings = {{0, 1}, {2, 3}};
  for (const auto& e : generate(s, 2).examples) {
    EXPECT_EQ(e.concepts[1], e.concepts[0]);
    EXPECT_EQ(e.concepts[3], e.concepts[2]);
  }
}

TEST(Generator, FlipRateMatchesEpsilon) {
  GeneratorSpec s = small_spec();
  s.num_examples = 5000;
  s.epsilon = 0.1;
  const auto protos = resolve_prototypes(s);
  const Dataset ds = generate(s, 4);
  double flips = 0;
  for (const auto& e : ds.examples) {
    for (std::size_t j = 0; j < 4; ++j) flips += e.concepts[j] != protos[e.label][j];
  }
  const double n = 4.0 * 5000;
  EXPECT_NEAR(flips / n, 0.1, 4 * std::sqrt(0.09 / n));
}

TEST(Generator, EmptyDatasetIsAllowed) {
  GeneratorSpec s = small_spec();
  s.num_examples = 0;
  const Dataset ds = generate(s, 0);
  EXPECT_TRUE(ds.empty());
  EXPECT_FALSE(ds.bayes_concept_accuracy);
  EXPECT_EQ(parse_dataset(format_dataset(ds)), ds);
}

TEST(Generator, BayesAccuracyIsSane) {
  GeneratorSpec s = small_spec();
  s.num_examples = 400;
  s.sigma = 1e-3;
  EXPECT_GT(*generate(s, 0).bayes_concept_accuracy, 0.999);
  s.sigma = 50.0;
  const double noisy = *generate(s, 0).bayes_concept_accuracy;
  // Prior-only guessing still recovers the prototype bit with probability 1 - eps.
  EXPECT_GT(noisy, 0.5);
  EXPECT_LT(noisy, 0.99);
}

TEST(Generator, RejectsBadSpecs) {
  GeneratorSpec s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(generate(s, 0), InvalidArgument);
  s = small_spec();
  s.epsilon = 0.5;
  EXPECT_THROW(generate(s, 0), InvalidArgument);
  s = small_spec();
  s.couplings = {{1, 1}};
  EXPECT_THROW(generate(s, 0), InvalidArgument);
  s = small_spec();
  s.prototypes = {{0, 0, 0, 0}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  EXPECT_THROW(generate(s, 0), InvalidArgument);
  s = small_spec();
  s.num_concepts = 1;
  s.num_classes = 3;
  EXPECT_THROW(generate(s, 0), InvalidArgument);
}

TEST(GeneratorSpec, TextRoundTrip) {
  GeneratorSpec s = small_spec();
  s.couplings = {{0, 1}};
  s.prototypes = {{1, 0, 0, 1}, {0, 1, 1, 0}, {1, 1, 1, 1}};
  s.sigma = 0.25;
  EXPECT_EQ(parse_generator_spec(format_generator_spec(s)), s);
  const GeneratorSpec p = parse_generator_spec(
      "# comment\nK = 5\nM = 2\nf=3\nN=10\nepsilon=0.1\ncouplings=0-1,2-3\n");
  EXPECT_EQ(p.num_concepts, 5U);
  EXPECT_EQ(p.couplings.size(), 2U);
  EXPECT_THROW(parse_generator_spec("K 5\n"), ParseError);
  EXPECT_THROW(parse_generator_spec("Q = 5\n"), ParseError);
  EXPECT_THROW(parse_generator_spec("K = five\n"), ParseError);
}

TEST(DatasetFormat, RoundTripIsExact) {
  const Dataset ds = generate(small_spec(), 5);
  const std::string text = format_dataset(ds);
  EXPECT_EQ(parse_dataset(text), ds);
  const auto path = std::filesystem::temp_directory_path() / "ecbm_data_test.txt";
  save_dataset(ds, path);
  EXPECT_EQ(load_dataset(path), ds);
  std::filesystem::remove(path);
}

TEST(DatasetFormat, TruncationNamesTheMissingLine) {
  const std::string text = format_dataset(generate(small_spec(), 5));
  const std::string cut = text.substr(0, text.rfind('\n', text.size() - 2) + 1);
  try {
    parse_dataset(cut);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 51"), std::string::npos) << e.what();
  }
}

TEST(DatasetFormat, RejectsMalformedRecords) {
  const Dataset ds = generate(small_spec(), 5);
  const std::string text = format_dataset(ds);
  const auto first_nl = text.find('\n');
  const std::string header = text.substr(0, first_nl + 1);
  EXPECT_THROW(parse_dataset(""), ParseError);
  EXPECT_THROW(parse_dataset("hello\n"), ParseError);
  std::string bad = text;
  bad.replace(bad.find('|', first_nl) + 2, 1, "7");
  EXPECT_THROW(parse_dataset(bad), ParseError);
  EXPECT_THROW(parse_dataset(text + "1 2 3 4 5 6 | 0 0 0 0 | 0\n"), ParseError);
  EXPECT_THROW(load_dataset("/nonexistent/ecbm.txt"), ParseError);
  (void)header;
}

TEST(Dataset, ValidateCatchesShapeMismatch) {
  Dataset ds = generate(small_spec(), 5);
  ds.examples[3].features.pop_back();
  EXPECT_THROW(ds.validate(), ShapeError);
}

TEST(Dataset, FeatureMatrixRows) {
  const Dataset ds = generate(small_spec(), 5);
  const DenseArray m = ds.feature_matrix({4, 1});
  EXPECT_EQ(m.rows(), 2U);
  EXPECT_EQ(m.at(0, 2), ds.examples[4].features[2]);
  EXPECT_EQ(m.at(1, 0), ds.examples[1].features[0]);
}

TEST(Format, DoublesRoundTrip) {
  for (double v : {0.1, 1.0 / 3, -2.5e-300, 1e300, 0.0}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
}

}  // namespace
}  // namespace ecbm::data
