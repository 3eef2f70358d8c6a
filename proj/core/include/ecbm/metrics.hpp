// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/inference.hpp"

namespace ecbm::metrics {

/// Share of individual concept bits predicted correctly.
double concept_accuracy(const std::vector<ConceptBits>& predicted,
                        const std::vector<ConceptBits>& truth);
/// Share of examples whose whole concept vector is correct.
double overall_concept_accuracy(const std::vector<ConceptBits>& predicted,
                                const std::vector<ConceptBits>& truth);
double class_accuracy(const std::vector<std::size_t>& predicted,
                      const std::vector<std::size_t>& truth);

struct Summary {
  double concept_acc = 0.0;
  double overall_acc = 0.0;
  double class_acc = 0.0;
};

Summary evaluate(const std::vector<infer::Prediction>& predictions,
                 const data::Dataset& dataset);

/// Two-line TSV: header, then the three accuracies at full precision.
std::string format_summary(const Summary& summary);

enum class InterventionMode { kExact, kGradient };

struct CurvePoint {
  double ratio = 0.0;
  std::size_t fixed = 0;  // concepts fixed per example
  Summary metrics;
};

/// For each ratio r, fixes ceil(r K) ground-truth concepts per example and
/// re-infers the rest. Each example draws one seeded permutation of the
/// concepts, so the fixed sets are nested across ratios.
std::vector<CurvePoint> intervention_curve(
    const Theta& theta, const data::Dataset& dataset,
    const std::vector<double>& ratios, InterventionMode mode,
    std::uint64_t seed, const infer::InferenceConfig& config = {});

}  // namespace ecbm::metrics
