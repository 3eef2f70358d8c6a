// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ecbm {

using Assignment = std::vector<std::size_t>;

/// A distribution over a few discrete variables, one row per assignment.
///
/// Variables are named "c<k>" for concept k (zero-based) and "y" for the
/// class. An undefined table (empty conditioning event) keeps its rows but
/// carries NaN probabilities.
struct ProbTable {
  std::vector<std::string> variables;
  std::vector<Assignment> rows;
  std::vector<double> probs;
  bool defined = true;

  /// softmax of log weights; all -inf yields an undefined table.
  static ProbTable from_log_weights(std::vector<std::string> variables,
                                    std::vector<Assignment> rows,
                                    const std::vector<double>& log_weights);
  /// Every assignment of variables with the given cardinalities, last
  /// variable fastest.
  static std::vector<Assignment> enumerate(const std::vector<std::size_t>& cards);

  std::size_t size() const { return rows.size(); }
  double sum() const;
  /// Rescales to unit mass; a zero or non-finite mass marks it undefined.
  void normalize();
  void mark_undefined();
  /// Probability of a full assignment; throws InvalidArgument if absent.
  double at(const Assignment& assignment) const;
  std::size_t variable_index(std::string_view name) const;
  /// Sums out every variable not in `keep`, in the order given.
  ProbTable marginal(const std::vector<std::string>& keep) const;

  /// Tab-separated: header of variable names plus "p", one row per
  /// assignment. Undefined tables print "nan" probabilities and a
  /// "# undefined" trailer.
  std::string to_tsv() const;
  static ProbTable parse_tsv(std::string_view text);
};

std::string concept_var(std::size_t k);

}  // namespace ecbm
