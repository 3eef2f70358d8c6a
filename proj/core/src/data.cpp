// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "ecbm/checkpoint.hpp"
#include "ecbm/error.hpp"

namespace ecbm::data {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) {
    s.remove_prefix(1);
  }
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const std::size_t start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <typename T>
T require_number(std::string_view s, const std::string& context) {
  T v{};
  if (!parse_number(s, v)) {
    throw ParseError(context + ": cannot parse '" + std::string(s) + "'");
  }
  return v;
}

ConceptBits parse_bits(std::string_view s, const std::string& context) {
  ConceptBits bits;
  for (char ch : trim(s)) {
    if (ch != '0' && ch != '1') {
      throw ParseError(context + ": concept bits must be 0/1");
    }
    bits.push_back(static_cast<std::uint8_t>(ch - '0'));
  }
  return bits;
}

std::string bits_string(const ConceptBits& bits) {
  std::string s;
  for (auto b : bits) s.push_back(b ? '1' : '0');
  return s;
}

void apply_couplings(const GeneratorSpec& spec, ConceptBits& c) {
  for (const auto& [a, b] : spec.couplings) c[b] = c[a];
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[i] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void Dataset::validate() const {
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const Example& e = examples[i];
    if (e.features.size() != feature_dim || e.concepts.size() != num_concepts ||
        e.label >= num_classes) {
      throw ShapeError("example " + std::to_string(i) +
                       " does not match dataset dimensions");
    }
  }
}

DenseArray Dataset::feature_matrix() const {
  std::vector<std::size_t> rows(examples.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return feature_matrix(rows);
}

DenseArray Dataset::feature_matrix(const std::vector<std::size_t>& rows) const {
  DenseArray m({rows.size(), feature_dim});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& f = examples.at(rows[r]).features;
    std::copy(f.begin(), f.end(),
              m.values().begin() + static_cast<std::ptrdiff_t>(r * feature_dim));
  }
  return m;
}

std::vector<double> Dataset::class_frequencies() const {
  std::vector<double> freq(num_classes, 0.0);
  if (examples.empty()) return freq;
  for (const Example& e : examples) freq[e.label] += 1.0;
  for (double& f : freq) f /= static_cast<double>(examples.size());
  return freq;
}

void GeneratorSpec::validate() const {
  if (num_concepts < 1 || num_concepts > 30) {
    throw InvalidArgument("generator: K must be in [1, 30]");
  }
  if (num_classes < 2) throw InvalidArgument("generator: M must be >= 2");
  if (feature_dim < 1) throw InvalidArgument("generator: f must be >= 1");
  if (num_classes > (std::size_t{1} << num_concepts)) {
    throw InvalidArgument("generator: more classes than concept vectors");
  }
  if (!(epsilon >= 0.0 && epsilon < 0.5)) {
    throw InvalidArgument("generator: epsilon must lie in [0, 0.5)");
  }
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("generator: sigma must be >= 0");
  }
  for (const auto& [a, b] : couplings) {
    if (a >= num_concepts || b >= num_concepts || a == b) {
      throw InvalidArgument("generator: bad coupling " + std::to_string(a) +
                            "-" + std::to_string(b));
    }
  }
  if (!prototypes.empty()) {
    if (prototypes.size() != num_classes) {
      throw InvalidArgument("generator: need one prototype per class");
    }
    std::set<ConceptBits> seen;
    for (const ConceptBits& p : prototypes) {
      if (p.size() != num_concepts) {
        throw InvalidArgument("generator: prototype has wrong length");
      }
      if (!seen.insert(p).second) {
        throw InvalidArgument("generator: prototypes must be distinct");
      }
    }
  }
}

GeneratorSpec parse_generator_spec(std::string_view text) {
  GeneratorSpec spec;
  std::size_t line_no = 0;
  for (std::string_view raw : split(text, '\n')) {
    ++line_no;
    std::string_view line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    const std::string ctx = "generator spec line " + std::to_string(line_no);
    if (eq == std::string_view::npos) throw ParseError(ctx + ": expected key = value");
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    if (key == "K") {
      spec.num_concepts = require_number<std::size_t>(value, ctx);
    } else if (key == "M") {
      spec.num_classes = require_number<std::size_t>(value, ctx);
    } else if (key == "f") {
      spec.feature_dim = require_number<std::size_t>(value, ctx);
    } else if (key == "N") {
      spec.num_examples = require_number<std::size_t>(value, ctx);
    } else if (key == "epsilon") {
      spec.epsilon = require_number<double>(value, ctx);
    } else if (key == "sigma") {
      spec.sigma = require_number<double>(value, ctx);
    } else if (key == "feature_seed") {
      spec.feature_seed = require_number<std::uint64_t>(value, ctx);
    } else if (key == "couplings") {
      spec.couplings.clear();
      if (!value.empty()) {
        for (std::string_view pair : split(value, ',')) {
          const auto parts = split(trim(pair), '-');
          if (parts.size() != 2) throw ParseError(ctx + ": coupling must be a-b");
          spec.couplings.emplace_back(require_number<std::size_t>(parts[0], ctx),
                                      require_number<std::size_t>(parts[1], ctx));
        }
      }
    } else if (key == "prototypes") {
      spec.prototypes.clear();
      if (!value.empty()) {
        for (std::string_view p : split(value, ',')) {
          spec.prototypes.push_back(parse_bits(p, ctx));
        }
      }
    } else {
      throw ParseError(ctx + ": unknown key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string format_generator_spec(const GeneratorSpec& spec) {
  std::ostringstream out;
  out << "K = " << spec.num_concepts << "\n"
      << "M = " << spec.num_classes << "\n"
      << "f = " << spec.feature_dim << "\n"
      << "N = " << spec.num_examples << "\n"
      << "epsilon = " << format_double(spec.epsilon) << "\n"
      << "sigma = " << format_double(spec.sigma) << "\n"
      << "feature_seed = " << spec.feature_seed << "\n"
      << "couplings = ";
  for (std::size_t i = 0; i < spec.couplings.size(); ++i) {
    if (i) out << ",";
    out << spec.couplings[i].first << "-" << spec.couplings[i].second;
  }
  out << "\nprototypes = ";
  for (std::size_t i = 0; i < spec.prototypes.size(); ++i) {
    if (i) out << ",";
    out << bits_string(spec.prototypes[i]);
  }
  out << "\n";
  return out.str();
}

DenseArray feature_map(const GeneratorSpec& spec) {
  spec.validate();
  const std::size_t in = spec.num_concepts + spec.num_classes;
  DenseArray a({spec.feature_dim, in});
  std::mt19937_64 rng(spec.feature_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : a.values()) v = normal(rng);
  return a;
}

std::vector<ConceptBits> resolve_prototypes(const GeneratorSpec& spec) {
  spec.validate();
  std::vector<ConceptBits> protos = spec.prototypes;
  if (protos.empty()) {
    std::mt19937_64 rng(spec.feature_seed ^ 0x5bd1e9955bd1e995ULL);
    std::bernoulli_distribution coin(0.5);
    std::set<ConceptBits> seen;
    std::size_t attempts = 0;
    while (protos.size() < spec.num_classes) {
      if (++attempts > 100000) {
        throw InvalidArgument("generator: cannot draw distinct prototypes");
      }
      ConceptBits p(spec.num_concepts);
      for (auto& b : p) b = coin(rng) ? 1 : 0;
      apply_couplings(spec, p);
      if (seen.insert(p).second) protos.push_back(p);
    }
  }
  return protos;
}

Dataset generate(const GeneratorSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::vector<ConceptBits> protos = resolve_prototypes(spec);
  const DenseArray a = feature_map(spec);
  const std::size_t k = spec.num_concepts, m = spec.num_classes;

  Dataset ds;
  ds.num_concepts = k;
  ds.num_classes = m;
  ds.feature_dim = spec.feature_dim;
  ds.generator_hash =
      fnv1a(format_generator_spec(spec) + "seed=" + std::to_string(seed));

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_class(0, m - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  ds.examples.reserve(spec.num_examples);
  for (std::size_t i = 0; i < spec.num_examples; ++i) {
    Example e;
    e.label = pick_class(rng);
    e.concepts = protos[e.label];
    for (auto& b : e.concepts) {
      if (unit(rng) < spec.epsilon) b ^= 1;
    }
    apply_couplings(spec, e.concepts);
    e.features.resize(spec.feature_dim);
    for (std::size_t r = 0; r < spec.feature_dim; ++r) {
      double v = a.at(r, k + e.label);
      for (std::size_t j = 0; j < k; ++j) {
        if (e.concepts[j]) v += a.at(r, j);
      }
      e.features[r] = v + spec.sigma * normal(rng);
    }
    ds.examples.push_back(std::move(e));
  }
  // 2^K * M * f work per example.
  const double work = std::ldexp(1.0, static_cast<int>(k)) *
                      static_cast<double>(m * spec.feature_dim) *
                      static_cast<double>(spec.num_examples);
  if (!ds.empty() && k <= 16 && work < 2e9) {
    ds.bayes_concept_accuracy = bayes_concept_accuracy(spec, ds);
  }
  return ds;
}

double bayes_concept_accuracy(const GeneratorSpec& spec,
                              const Dataset& dataset) {
  spec.validate();
  const std::size_t k = spec.num_concepts, m = spec.num_classes;
  if (k > 16) throw EnumerationLimit("bayes accuracy needs K <= 16");
  if (dataset.empty()) throw InvalidArgument("bayes accuracy of empty dataset");
  const std::vector<ConceptBits> protos = resolve_prototypes(spec);
  const DenseArray a = feature_map(spec);
  const std::size_t n_c = std::size_t{1} << k;

  // log p(c, y), accumulated over the pre-coupling draw.
  std::vector<double> prior(n_c * m, 0.0);
  for (std::size_t y = 0; y < m; ++y) {
    for (std::size_t raw = 0; raw < n_c; ++raw) {
      double p = 1.0 / static_cast<double>(m);
      ConceptBits c(k);
      for (std::size_t j = 0; j < k; ++j) {
        c[j] = static_cast<std::uint8_t>((raw >> j) & 1U);
        p *= c[j] == protos[y][j] ? 1.0 - spec.epsilon : spec.epsilon;
      }
      apply_couplings(spec, c);
      std::size_t idx = 0;
      for (std::size_t j = 0; j < k; ++j) idx |= std::size_t{c[j]} << j;
      prior[idx * m + y] += p;
    }
  }
  // Feature means of every (c, y).
  std::vector<std::size_t> support;
  std::vector<std::vector<double>> means;
  for (std::size_t idx = 0; idx < n_c; ++idx) {
    for (std::size_t y = 0; y < m; ++y) {
      if (prior[idx * m + y] <= 0.0) continue;
      std::vector<double> mu(spec.feature_dim);
      for (std::size_t r = 0; r < spec.feature_dim; ++r) {
        double v = a.at(r, k + y);
        for (std::size_t j = 0; j < k; ++j) {
          if ((idx >> j) & 1U) v += a.at(r, j);
        }
        mu[r] = v;
      }
      support.push_back(idx * m + y);
      means.push_back(std::move(mu));
    }
  }
  const double s = std::max(spec.sigma, 1e-6);
  double total = 0.0;
  std::vector<double> logpost(support.size());
  for (const Example& e : dataset.examples) {
    double mx = -INFINITY;
    for (std::size_t i = 0; i < support.size(); ++i) {
      double sq = 0.0;
      for (std::size_t r = 0; r < spec.feature_dim; ++r) {
        const double d = e.features[r] - means[i][r];
        sq += d * d;
      }
      logpost[i] = std::log(prior[support[i]]) - sq / (2.0 * s * s);
      mx = std::max(mx, logpost[i]);
    }
    std::vector<double> p_one(k, 0.0);
    double z = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      const double w = std::exp(logpost[i] - mx);
      z += w;
      const std::size_t idx = support[i] / m;
      for (std::size_t j = 0; j < k; ++j) {
        if ((idx >> j) & 1U) p_one[j] += w;
      }
    }
    for (std::size_t j = 0; j < k; ++j) {
      const double p = p_one[j] / z;
      total += std::max(p, 1.0 - p);
    }
  }
  return total / static_cast<double>(dataset.size() * k);
}

std::string format_dataset(const Dataset& ds) {
  ds.validate();
  std::string out = "ecbm-dataset v1 K=" + std::to_string(ds.num_concepts) +
                    " M=" + std::to_string(ds.num_classes) +
                    " f=" + std::to_string(ds.feature_dim) +
                    " N=" + std::to_string(ds.size()) +
                    " hash=" + hex64(ds.generator_hash) + " bayes=" +
                    (ds.bayes_concept_accuracy
                         ? format_double(*ds.bayes_concept_accuracy)
                         : std::string("none")) +
                    "\n";
  for (const Example& e : ds.examples) {
    for (std::size_t i = 0; i < e.features.size(); ++i) {
      if (i) out += ' ';
      out += format_double(e.features[i]);
    }
    out += " |";
    for (auto b : e.concepts) out += b ? " 1" : " 0";
    out += " | " + std::to_string(e.label) + "\n";
  }
  return out;
}

Dataset parse_dataset(std::string_view text) {
  std::vector<std::string_view> lines = split(text, '\n');
  if (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError("dataset line 1: missing header");
  const auto head = tokens(lines[0]);
  if (head.size() < 2 || head[0] != "ecbm-dataset" || head[1] != "v1") {
    throw ParseError("dataset line 1: not an ecbm-dataset v1 header");
  }
  std::map<std::string, std::string, std::less<>> fields;
  for (std::size_t i = 2; i < head.size(); ++i) {
    const std::size_t eq = head[i].find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("dataset line 1: malformed field '" +
                       std::string(head[i]) + "'");
    }
    fields[std::string(head[i].substr(0, eq))] =
        std::string(head[i].substr(eq + 1));
  }
  auto field = [&](const char* key) -> const std::string& {
    auto it = fields.find(key);
    if (it == fields.end()) {
      throw ParseError(std::string("dataset line 1: missing ") + key);
    }
    return it->second;
  };
  Dataset ds;
  ds.num_concepts = require_number<std::size_t>(field("K"), "dataset line 1");
  ds.num_classes = require_number<std::size_t>(field("M"), "dataset line 1");
  ds.feature_dim = require_number<std::size_t>(field("f"), "dataset line 1");
  const auto n = require_number<std::size_t>(field("N"), "dataset line 1");
  ds.generator_hash = 0;
  {
    const std::string& h = field("hash");
    auto [ptr, ec] =
        std::from_chars(h.data(), h.data() + h.size(), ds.generator_hash, 16);
    if (ec != std::errc() || ptr != h.data() + h.size()) {
      throw ParseError("dataset line 1: bad hash");
    }
  }
  if (auto it = fields.find("bayes"); it != fields.end() && it->second != "none") {
    ds.bayes_concept_accuracy =
        require_number<double>(it->second, "dataset line 1");
  }
  if (lines.size() - 1 < n) {
    throw ParseError("dataset truncated: header declares N=" +
                     std::to_string(n) + " but record " +
                     std::to_string(lines.size()) + " (line " +
                     std::to_string(lines.size() + 1) + ") is missing");
  }
  if (lines.size() - 1 > n) {
    throw ParseError("dataset line " + std::to_string(n + 2) +
                     ": more records than header N=" + std::to_string(n));
  }
  ds.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string ctx = "dataset line " + std::to_string(i + 2);
    const auto parts = split(lines[i + 1], '|');
    if (parts.size() != 3) throw ParseError(ctx + ": expected 3 '|' fields");
    Example e;
    for (auto tok : tokens(parts[0])) {
      e.features.push_back(require_number<double>(tok, ctx));
    }
    for (auto tok : tokens(parts[1])) {
      if (tok != "0" && tok != "1") throw ParseError(ctx + ": bad concept bit");
      e.concepts.push_back(tok == "1" ? 1 : 0);
    }
    e.label = require_number<std::size_t>(parts[2], ctx);
    if (e.features.size() != ds.feature_dim) {
      throw ParseError(ctx + ": expected " + std::to_string(ds.feature_dim) +
                       " features, got " + std::to_string(e.features.size()));
    }
    if (e.concepts.size() != ds.num_concepts) {
      throw ParseError(ctx + ": expected " + std::to_string(ds.num_concepts) +
                       " concept bits, got " +
                       std::to_string(e.concepts.size()));
    }
    if (e.label >= ds.num_classes) throw ParseError(ctx + ": class out of range");
    ds.examples.push_back(std::move(e));
  }
  return ds;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_atomic(path, format_dataset(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path));
}

}  // namespace ecbm::data
