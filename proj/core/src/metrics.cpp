// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ecbm/error.hpp"
#include "ecbm/parallel.hpp"

namespace ecbm::metrics {
namespace {

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ShapeError("prediction and truth counts differ");
  if (a == 0) throw InvalidArgument("metric of an empty set is undefined");
}

}  // namespace

double concept_accuracy(const std::vector<ConceptBits>& predicted,
                        const std::vector<ConceptBits>& truth) {
  check_sizes(predicted.size(), truth.size());
  std::size_t hits = 0, total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].size() != truth[i].size()) {
      throw ShapeError("concept vectors differ in length");
    }
    for (std::size_t k = 0; k < truth[i].size(); ++k) {
      hits += predicted[i][k] == truth[i][k];
    }
    total += truth[i].size();
  }
  if (total == 0) throw InvalidArgument("no concepts to score");
  return static_cast<double>(hits) / static_cast<double>(total);
}

double overall_concept_accuracy(const std::vector<ConceptBits>& predicted,
                                const std::vector<ConceptBits>& truth) {
  check_sizes(predicted.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i].size() != truth[i].size()) {
      throw ShapeError("concept vectors differ in length");
    }
    hits += predicted[i] == truth[i];
  }
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double class_accuracy(const std::vector<std::size_t>& predicted,
                      const std::vector<std::size_t>& truth) {
  check_sizes(predicted.size(), truth.size());
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Summary evaluate(const std::vector<infer::Prediction>& predictions,
                 const data::Dataset& dataset) {
  std::vector<ConceptBits> pc, tc;
  std::vector<std::size_t> py, ty;
  for (const auto& p : predictions) {
    pc.push_back(p.concepts);
    py.push_back(p.label);
  }
  for (const auto& e : dataset.examples) {
    tc.push_back(e.concepts);
    ty.push_back(e.label);
  }
  return {concept_accuracy(pc, tc), overall_concept_accuracy(pc, tc),
          class_accuracy(py, ty)};
}

std::string format_summary(const Summary& summary) {
  return "concept_accuracy\toverall_concept_accuracy\tclass_accuracy\n" +
         data::format_double(summary.concept_acc) + "\t" +
         data::format_double(summary.overall_acc) + "\t" +
         data::format_double(summary.class_acc) + "\n";
}

std::vector<CurvePoint> intervention_curve(
    const Theta& theta, const data::Dataset& dataset,
    const std::vector<double>& ratios, InterventionMode mode,
    std::uint64_t seed, const infer::InferenceConfig& config) {
  const std::size_t k = theta.config().num_concepts;
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) {
      throw InvalidArgument("intervention ratios must lie in [0, 1]");
    }
  }
  if (dataset.empty()) throw InvalidArgument("intervention curve of empty set");
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::size_t>> perms(dataset.size());
  for (auto& p : perms) {
    p.resize(k);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), rng);
  }
  std::vector<CurvePoint> out;
  for (double r : ratios) {
    const auto fixed = static_cast<std::size_t>(
        std::ceil(r * static_cast<double>(k) - 1e-12));
    std::vector<infer::Prediction> preds(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t i) {
      const data::Example& e = dataset.examples[i];
      infer::InterventionMask mask;
      for (std::size_t j = 0; j < fixed; ++j) {
        mask[perms[i][j]] = e.concepts[perms[i][j]];
      }
      if (mode == InterventionMode::kGradient) {
        preds[i] = infer::intervene_gradient(theta, e.features, mask, config);
      } else {
        const auto m = infer::exact_marginals(theta, e.features, mask, config);
        preds[i].concepts = infer::round_concepts(m.concept_probs);
        preds[i].label = infer::argmax(m.class_probs);
      }
    });
    out.push_back({r, fixed, evaluate(preds, dataset)});
  }
  return out;
}

}  // namespace ecbm::metrics
