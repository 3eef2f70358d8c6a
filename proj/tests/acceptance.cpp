// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Diagnostics go to stdout on indented lines.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ecbm/checkpoint.hpp"
#include "ecbm/data.hpp"
#include "ecbm/inference.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/metrics.hpp"
#include "ecbm/training.hpp"
#include "test_util.hpp"

namespace ecbm {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

/// Largest absolute difference; infinity when the tables are not aligned.
double table_gap(const ProbTable& a, const ProbTable& b) {
  if (a.variables != b.variables || a.rows != b.rows || a.defined != b.defined) {
    return INFINITY;
  }
  double g = 0.0;
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (!a.defined) continue;
    g = std::max(g, std::abs(a.probs[r] - b.probs[r]));
  }
  return g;
}

const char* const kHeadBiases[] = {params::kClassOutB, params::kConceptOutB,
                                   params::kGlobalOutB};

Theta shift_head(const Theta& t, const char* bias, double by) {
  Theta s = t;
  for (double& v : s.param(bias).values()) v += by;
  return s;
}

// 1 ----------------------------------------------------------------------

Outcome oracle_equivalence() {
  using interpret::Query;
  using interpret::QueryKind;
  const std::pair<std::size_t, std::size_t> sizes[] = {
      {3, 2}, {4, 3}, {5, 4}, {6, 2}, {6, 4}};
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < 5; ++s) {
    const auto [k, m] = sizes[s];
    const Theta t = testing::random_theta(testing::small_config(k, m, 6, 6), 500 + s);
    const auto ds = testing::random_dataset(k, m, 6, 50, 600 + s);
    const interpret::BruteForceOracle oracle(t, ds);
    auto check = [&](const ProbTable& got, const Query& q) {
      worst = std::max(worst, table_gap(got, oracle.answer(q)));
      ++checked;
    };
    for (std::size_t y = 0; y < m; ++y) {
      const auto marg = interpret::marginal_concept_importance(t, ds, y);
      for (std::size_t j = 0; j < k; ++j) {
        check(marg[j], testing::query(QueryKind::kMarginal, y, j));
      }
      check(*interpret::joint_concept_importance(t, ds, y, ConceptBits(k, 0)).table,
            testing::query(QueryKind::kJoint, y));
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          if (a == b) continue;
          for (std::uint8_t v : {0, 1}) {
            check(interpret::concept_conditional_given_class(t, ds, a, b, v, y),
                  testing::query(QueryKind::kCondClass, y, a, b, v));
            if (y == 0) {
              check(interpret::concept_conditional(t, ds, a, b, v),
                    testing::query(QueryKind::kCond, 0, a, b, v));
            }
          }
        }
      }
    }
    std::mt19937_64 rng(700 + s);
    for (int rep = 0; rep < 6; ++rep) {
      Query q;
      q.features = testing::random_vector(6, rng);
      for (std::size_t j = 0; j < k; ++j) {
        if (rng() % 3 == 0) q.mask[j] = rng() & 1U;
      }
      q.kind = QueryKind::kJointMissing;
      check(interpret::estimate(t, ds, q), q);
      q.kind = QueryKind::kMissingConcept;
      if (q.mask.size() < k) check(interpret::estimate(t, ds, q), q);
      q.kind = QueryKind::kClassGivenConcept;
      q.mask.clear();
      q.k = rng() % k;
      q.value = rng() & 1U;
      check(interpret::estimate(t, ds, q), q);
    }
  }
  return {worst <= 1e-6, std::to_string(checked) + " tables, max gap " +
                             fmt("%.3g", worst) + " (tol 1e-6)"};
}

// 2 ----------------------------------------------------------------------

Outcome gradient_correctness() {
  const ModelConfig cfg = testing::small_config(3, 3, 5, 5);
  std::vector<ConceptBits> all;
  for (std::size_t v = 0; v < 8; ++v) all.push_back(testing::bits_of(v, 3));
  const diff::Graph g = train::build_loss_graph(cfg, 4, all.size(), 0.3, 0.3);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Theta t = testing::random_theta(cfg, 40 + s);
    const auto ds = testing::random_dataset(3, 3, 5, 4, 50 + s);
    std::vector<ConceptBits> cg;
    for (const auto& e : ds.examples) cg.push_back(e.concepts);
    const auto in = train::make_batch(ds, {0, 1, 2, 3}, cg, all);
    diff::Bindings b;
    t.bind(b);
    b.bind("x", in.x).bind("y", in.y).bind("c", in.c).bind("c_global", in.c_global);
    b.bind("negatives", in.negatives);
    std::vector<std::string> names;
    for (const auto& [n, a] : t.params()) names.push_back(n);
    for (const char* out : {"l_class", "l_concept", "l_global"}) {
      worst = std::max(worst, diff::check_gradient(g, b, out, 1e-5, names, {true, s}));
    }
  }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " (tol 1e-4)"};
}

// 3 ----------------------------------------------------------------------

Outcome normalization_and_shift() {
  double norm_gap = 0.0, shift_gap = 0.0;
  for (std::uint64_t s = 0; s < 4; ++s) {
    const std::size_t k = 3 + s % 2, m = 2 + s % 3;
    const Theta t = testing::random_theta(testing::small_config(k, m, 5, 6), 80 + s);
    const auto ds = testing::random_dataset(k, m, 5, 20, 90 + s);
    std::mt19937_64 rng(s);
    const auto x = testing::random_vector(5, rng);
    const infer::InterventionMask mask{{0, 1}};
    auto tables = [&](const Theta& th) {
      std::vector<ProbTable> out;
      out.push_back(infer::intervene_exact(th, x, {}));
      out.push_back(infer::intervene_exact(th, x, mask));
      out.push_back(infer::missing_concept_posterior(th, x, mask));
      for (auto& p : interpret::marginal_concept_importance(th, ds, m - 1)) {
        out.push_back(std::move(p));
      }
      out.push_back(*interpret::joint_concept_importance(th, ds, 0, ConceptBits(k, 1)).table);
      out.push_back(interpret::concept_conditional_given_class(th, ds, 0, 1, 1, 1));
      out.push_back(interpret::concept_conditional(th, ds, 1, 2, 0));
      interpret::Query q;
      q.kind = interpret::QueryKind::kClassGivenConcept;
      q.features = x;
      q.k = 1;
      q.value = 1;
      out.push_back(interpret::estimate(th, ds, q));
      return out;
    };
    const auto base = tables(t);
    for (const auto& tb : base) norm_gap = std::max(norm_gap, std::abs(tb.sum() - 1.0));
    const auto post = class_posterior(t, x);
    norm_gap =
        std::max(norm_gap, std::abs(std::accumulate(post.begin(), post.end(), 0.0) - 1.0));
    for (const char* bias : kHeadBiases) {
      const auto shifted = tables(shift_head(t, bias, 7.3));
      for (std::size_t i = 0; i < base.size(); ++i) {
        shift_gap = std::max(shift_gap, table_gap(base[i], shifted[i]));
      }
    }
  }
  return {norm_gap <= 1e-9 && shift_gap <= 1e-9,
          "normalization gap " + fmt("%.3g", norm_gap) + ", shift gap " +
              fmt("%.3g", shift_gap) + " (tol 1e-9)"};
}

// 4-7 share one trained model ---------------------------------------------

struct Trained {
  data::Dataset train_set, test_set;
  Theta theta;
  train::TrainResult result;
  double seconds = 0.0;
};

data::GeneratorSpec training_spec() {
  data::GeneratorSpec spec;
  spec.num_concepts = 6;
  spec.num_classes = 4;
  spec.feature_dim = 16;
  spec.num_examples = 2000;
  spec.epsilon = 0.05;
  spec.couplings = {{0, 1}};
  return spec;
}

ModelConfig training_model() {
  ModelConfig mc;
  mc.num_concepts = 6;
  mc.num_classes = 4;
  mc.feature_dim = 16;
  return mc;
}

Trained train_reference() {
  Trained t;
  data::GeneratorSpec spec = training_spec();
  t.train_set = data::generate(spec, 0);
  spec.num_examples = 500;
  t.test_set = data::generate(spec, 1);
  const auto t0 = Clock::now();
  t.result = train::train(Theta::initialize(training_model(), 0), t.train_set,
                          train::TrainConfig{});
  t.seconds = seconds_since(t0);
  t.theta = t.result.theta;
  return t;
}

Outcome training_sanity(const Trained& t) {
  const auto& h = t.result.history;
  const bool loss_falls = h.back().l_total < h.front().l_total;
  const double bayes = *t.test_set.bayes_concept_accuracy;
  const auto s = metrics::evaluate(infer::predict_all(t.theta, t.test_set), t.test_set);
  const bool concept_ok = s.concept_acc >= bayes - 0.05;
  const bool class_ok = s.class_acc > 0.5;

  infer::InferenceConfig warm;
  warm.warm_start = true;
  const auto w = metrics::evaluate(infer::predict_all(t.theta, t.test_set, warm), t.test_set);
  double exact_concept = 0, exact_class = 0;
  for (const auto& e : t.test_set.examples) {
    const auto m = infer::exact_marginals(t.theta, e.features, {});
    const auto c = infer::round_concepts(m.concept_probs);
    for (std::size_t k = 0; k < c.size(); ++k) exact_concept += c[k] == e.concepts[k];
    exact_class += infer::argmax(m.class_probs) == e.label;
  }
  const double n = static_cast<double>(t.test_set.size());
  std::printf("    loss epoch 1 %.6f, epoch 30 %.6f; train %.1f s\n", h.front().l_total,
              h.back().l_total, t.seconds);
  std::printf("    default predict: concept %.4f overall %.4f class %.4f; bayes %.4f\n",
              s.concept_acc, s.overall_acc, s.class_acc, bayes);
  std::printf("    warm-start predict: concept %.4f class %.4f\n", w.concept_acc,
              w.class_acc);
  std::printf("    exact marginals: concept %.4f class %.4f\n",
              exact_concept / (n * 6.0), exact_class / n);
  return {loss_falls && concept_ok && class_ok && t.seconds < 300,
          std::string("loss falls ") + (loss_falls ? "yes" : "no") + "; concept " +
              fmt("%.4f", s.concept_acc) + " vs bayes-0.05 " + fmt("%.4f", bayes - 0.05) +
              "; class " + fmt("%.4f", s.class_acc) + " vs 0.5"};
}

Outcome intervention_trend(const Trained& t) {
  const std::vector<double> ratios{0, 0.25, 0.5, 0.75, 1};
  auto show = [&](const char* name, const std::vector<metrics::CurvePoint>& c) {
    std::printf("    %s:", name);
    for (const auto& p : c) {
      std::printf(" r=%.2f overall %.4f class %.4f;", p.ratio, p.metrics.overall_acc,
                  p.metrics.class_acc);
    }
    std::printf("\n");
  };
  const auto curve = metrics::intervention_curve(t.theta, t.test_set, ratios,
                                                 metrics::InterventionMode::kGradient, 0);
  show("gradient", curve);
  show("exact", metrics::intervention_curve(t.theta, t.test_set, ratios,
                                            metrics::InterventionMode::kExact, 0));
  bool monotone = true;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    monotone = monotone && curve[i].metrics.overall_acc >= curve[i - 1].metrics.overall_acc;
  }
  const bool full = curve.back().metrics.overall_acc == 1.0;
  const bool cls = curve.back().metrics.class_acc >= curve.front().metrics.class_acc;
  return {monotone && full && cls,
          std::string("monotone ") + (monotone ? "yes" : "no") + "; r=1 overall " +
              fmt("%.4f", curve.back().metrics.overall_acc) + "; class " +
              fmt("%.4f", curve.front().metrics.class_acc) + " -> " +
              fmt("%.4f", curve.back().metrics.class_acc)};
}

struct Fidelity {
  double mean = INFINITY;
  std::size_t pairs = 0, skipped = 0;
};

Fidelity hard_gap(const Trained& t, const interpret::EstimatorConfig& hard) {
  // One prediction pass shared by every pair.
  std::vector<interpret::Record> recs;
  for (const auto& p : infer::predict_all(t.theta, t.test_set, hard.inference)) {
    recs.push_back({p.concepts, p.label});
  }
  Fidelity f;
  double gap = 0.0;
  for (std::size_t a = 0; a < 6; ++a) {
    for (std::size_t b = 0; b < 6; ++b) {
      if (a == b) continue;
      const interpret::Query q = testing::query(interpret::QueryKind::kCond, 0, a, b, 1);
      const ProbTable est = interpret::count_frequencies(recs, 6, 4, q);
      const ProbTable emp = interpret::empirical_estimates(t.test_set, q);
      if (!est.defined || !emp.defined) {
        ++f.skipped;
        continue;
      }
      gap += std::abs(est.probs[1] - emp.probs[1]);
      ++f.pairs;
    }
  }
  if (f.pairs) f.mean = gap / static_cast<double>(f.pairs);
  return f;
}

Outcome interpretation_fidelity(const Trained& t) {
  interpret::EstimatorConfig hard;
  hard.mode = interpret::EstimateMode::kHard;
  const Fidelity f = hard_gap(t, hard);
  // Cross-check the shared pass against the public hard estimator on one pair.
  const interpret::Query probe = testing::query(interpret::QueryKind::kCond, 0, 2, 3, 1);
  const ProbTable direct = interpret::estimate(t.theta, t.test_set, probe, hard);
  std::vector<interpret::Record> recs;
  for (const auto& p : infer::predict_all(t.theta, t.test_set)) {
    recs.push_back({p.concepts, p.label});
  }
  const ProbTable shared = interpret::count_frequencies(recs, 6, 4, probe);
  const bool consistent = direct.defined == shared.defined &&
                          (!direct.defined || direct.probs == shared.probs);
  interpret::EstimatorConfig warm = hard;
  warm.inference.warm_start = true;
  const Fidelity w = hard_gap(t, warm);
  std::printf("    warm-start hard estimates: %zu pairs, mean L1 gap %.4f\n", w.pairs,
              w.mean);
  return {f.pairs > 0 && f.mean <= 0.1 && consistent,
          std::to_string(f.pairs) + " pairs (" + std::to_string(f.skipped) +
              " undefined), mean L1 gap " + fmt("%.4f", f.mean) + " (tol 0.1)"};
}

Outcome determinism(const Trained& t) {
  auto run = [&] {
    const auto r = train::train(Theta::initialize(training_model(), 0), t.train_set,
                                train::TrainConfig{});
    return std::make_pair(
        r.theta,
        metrics::format_summary(metrics::evaluate(infer::predict_all(r.theta, t.test_set),
                                                  t.test_set)));
  };
  const auto a = run();
  const auto b = run();
  const bool same_summary = a.second == b.second;
  const bool same_theta = a.first == b.first && a.first == t.theta;
  const std::string bytes = encode_checkpoint(a.first);
  const Theta back = decode_checkpoint(bytes);
  const bool round_trip = back == a.first && encode_checkpoint(back) == bytes;
  return {same_summary && same_theta && round_trip,
          std::string("summaries identical ") + (same_summary ? "yes" : "no") +
              "; parameters identical " + (same_theta ? "yes" : "no") +
              "; checkpoint round trip " + (round_trip ? "yes" : "no")};
}

// 8 ----------------------------------------------------------------------

Outcome exact_vs_gradient() {
  const ModelConfig cfg = testing::small_config(4, 3, 8, 8);
  bool pass = true;
  std::string detail;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Theta t = testing::random_theta(cfg, s);
    std::mt19937_64 rng(1000 + s);
    std::size_t agree = 0;
    for (int i = 0; i < 100; ++i) {
      const auto x = testing::random_vector(8, rng);
      const infer::InterventionMask mask{
          {static_cast<std::size_t>(rng() % 4), static_cast<std::uint8_t>(rng() & 1U)}};
      const auto g = infer::intervene_gradient(t, x, mask);
      const auto e = infer::exact_marginals(t, x, mask);
      agree += g.label == infer::argmax(e.class_probs);
    }
    pass = pass && agree >= 90;
    detail += (s ? ", " : "") + std::string("fixture ") + std::to_string(s) + ": " +
              std::to_string(agree) + "/100";
  }
  return {pass, detail + " (need >= 90 each)"};
}

}  // namespace
}  // namespace ecbm

int main() {
  using namespace ecbm;
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("criterion %d %-34s %s  %s [%.1f s]\n", id, name, o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  };
  report(1, "estimator/oracle equivalence", oracle_equivalence);
  report(2, "loss gradients vs finite diffs", gradient_correctness);
  report(3, "normalization and shift", normalization_and_shift);
  const Trained model = train_reference();
  report(4, "training sanity", [&] { return training_sanity(model); });
  report(5, "intervention trend", [&] { return intervention_trend(model); });
  report(6, "interpretation fidelity", [&] { return interpretation_fidelity(model); });
  report(7, "determinism", [&] { return determinism(model); });
  report(8, "exact vs gradient intervention", exact_vs_gradient);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
