// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/prob_table.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "ecbm/data.hpp"
#include "ecbm/error.hpp"

namespace ecbm {

std::string concept_var(std::size_t k) { return "c" + std::to_string(k); }

ProbTable ProbTable::from_log_weights(std::vector<std::string> variables,
                                      std::vector<Assignment> rows,
                                      const std::vector<double>& log_weights) {
  if (rows.size() != log_weights.size()) {
    throw ShapeError("probability table: rows and weights differ in length");
  }
  ProbTable t{std::move(variables), std::move(rows), {}, true};
  double mx = -std::numeric_limits<double>::infinity();
  for (double w : log_weights) mx = std::max(mx, w);
  t.probs.resize(log_weights.size());
  if (!std::isfinite(mx)) {
    t.mark_undefined();
    return t;
  }
  for (std::size_t i = 0; i < log_weights.size(); ++i) {
    t.probs[i] = std::exp(log_weights[i] - mx);
  }
  t.normalize();
  return t;
}

std::vector<Assignment> ProbTable::enumerate(
    const std::vector<std::size_t>& cards) {
  std::size_t total = 1;
  for (std::size_t c : cards) total *= c;
  std::vector<Assignment> out;
  out.reserve(total);
  Assignment a(cards.size(), 0);
  for (std::size_t i = 0; i < total; ++i) {
    out.push_back(a);
    for (std::size_t v = cards.size(); v-- > 0;) {
      if (++a[v] < cards[v]) break;
      a[v] = 0;
    }
  }
  return out;
}

double ProbTable::sum() const {
  double s = 0.0;
  for (double p : probs) s += p;
  return s;
}

void ProbTable::normalize() {
  const double s = sum();
  if (!(s > 0.0) || !std::isfinite(s)) {
    mark_undefined();
    return;
  }
  for (double& p : probs) p /= s;
  defined = true;
}

void ProbTable::mark_undefined() {
  defined = false;
  probs.assign(rows.size(), std::numeric_limits<double>::quiet_NaN());
}

double ProbTable::at(const Assignment& assignment) const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] == assignment) return probs[i];
  }
  throw InvalidArgument("assignment not present in probability table");
}

std::size_t ProbTable::variable_index(std::string_view name) const {
  for (std::size_t i = 0; i < variables.size(); ++i) {
    if (variables[i] == name) return i;
  }
  throw InvalidArgument("probability table has no variable '" +
                        std::string(name) + "'");
}

ProbTable ProbTable::marginal(const std::vector<std::string>& keep) const {
  std::vector<std::size_t> idx;
  for (const std::string& v : keep) idx.push_back(variable_index(v));
  std::map<Assignment, double> acc;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Assignment a;
    for (std::size_t j : idx) a.push_back(rows[i][j]);
    acc[a] += probs[i];
  }
  ProbTable t{keep, {}, {}, defined};
  for (const auto& [a, p] : acc) {
    t.rows.push_back(a);
    t.probs.push_back(defined ? p : std::numeric_limits<double>::quiet_NaN());
  }
  return t;
}

std::string ProbTable::to_tsv() const {
  std::string out;
  for (const std::string& v : variables) out += v + "\t";
  out += "p\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t a : rows[i]) out += std::to_string(a) + "\t";
    out += defined ? data::format_double(probs[i]) : std::string("nan");
    out += "\n";
  }
  if (!defined) out += "# undefined\n";
  return out;
}

ProbTable ProbTable::parse_tsv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  ProbTable t;
  if (!std::getline(in, line)) throw ParseError("probability table: empty");
  {
    std::istringstream hs(line);
    std::string name;
    std::vector<std::string> names;
    while (std::getline(hs, name, '\t')) names.push_back(name);
    if (names.empty() || names.back() != "p") {
      throw ParseError("probability table: header must end in 'p'");
    }
    names.pop_back();
    t.variables = names;
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line == "# undefined") {
      t.defined = false;
      continue;
    }
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, '\t')) cells.push_back(cell);
    if (cells.size() != t.variables.size() + 1) {
      throw ParseError("probability table line " + std::to_string(line_no) +
                       ": wrong number of fields");
    }
    Assignment a;
    for (std::size_t i = 0; i < t.variables.size(); ++i) {
      std::size_t v = 0;
      auto [p, ec] = std::from_chars(cells[i].data(),
                                     cells[i].data() + cells[i].size(), v);
      if (ec != std::errc() || p != cells[i].data() + cells[i].size()) {
        throw ParseError("probability table line " + std::to_string(line_no) +
                         ": bad assignment");
      }
      a.push_back(v);
    }
    double prob = std::numeric_limits<double>::quiet_NaN();
    if (cells.back() != "nan") {
      auto [p, ec] = std::from_chars(
          cells.back().data(), cells.back().data() + cells.back().size(), prob);
      if (ec != std::errc() || p != cells.back().data() + cells.back().size()) {
        throw ParseError("probability table line " + std::to_string(line_no) +
                         ": bad probability");
      }
    }
    t.rows.push_back(std::move(a));
    t.probs.push_back(prob);
  }
  return t;
}

}  // namespace ecbm
