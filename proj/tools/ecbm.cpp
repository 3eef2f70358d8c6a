// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

// ecbm: generate, train, evaluate, query and serve energy-based concept
// bottleneck models.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecbm/checkpoint.hpp"
#include "ecbm/data.hpp"
#include "ecbm/error.hpp"
#include "ecbm/inference.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/metrics.hpp"
#include "ecbm/model.hpp"
#include "ecbm/service.hpp"
#include "ecbm/training.hpp"

#ifndef ECBM_VERSION
#define ECBM_VERSION "v0.1.0"
#endif

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;
using ecbm::data::format_double;

enum ExitCode { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3 };

struct UsageError : ecbm::Error {
  using ecbm::Error::Error;
};

std::string one_line(std::string s) {
  for (char& ch : s) {
    if (ch == '\n' || ch == '\r') ch = ' ';
  }
  return s;
}

int fail(ExitCode code, const std::string& kind, const std::string& message) {
  std::cerr << "ecbm: error=" << kind << " code=" << code << " msg=\""
            << one_line(message) << "\"\n";
  return code;
}

// Primary output goes to a file (with a manifest beside it) or stdout.
struct Run {
  std::string command;
  json config = json::object();
  json seeds = json::object();
  std::vector<std::string> inputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  void emit(const std::string& path, const std::string& contents) const {
    if (path.empty() || path == "-") {
      std::cout << contents;
      std::cout.flush();
      return;
    }
    ecbm::write_file_atomic(path, contents);
    write_manifest(path);
  }

  void write_manifest(const std::string& output) const {
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
            .count();
    const std::time_t now = std::time(nullptr);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    json m = {{"command", command},
              {"config", config},
              {"seeds", seeds},
              {"inputs", inputs},
              {"output", output},
              {"version", ECBM_VERSION},
              {"finished_at", stamp},
              {"wall_clock_seconds", seconds}};
    ecbm::write_file_atomic(output + ".manifest.json", m.dump(2) + "\n");
  }
};

std::vector<double> parse_numbers(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string("bad number '") + item + "' in " + what);
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

ecbm::infer::InterventionMask parse_fixes(const std::vector<std::string>& fixes) {
  ecbm::infer::InterventionMask mask;
  for (const std::string& f : fixes) {
    const auto eq = f.find('=');
    std::size_t k = 0;
    int bit = -1;
    try {
      if (eq == std::string::npos) throw std::invalid_argument(f);
      std::size_t used = 0;
      k = std::stoul(f.substr(0, eq), &used);
      if (used != eq) throw std::invalid_argument(f);
      const std::string b = f.substr(eq + 1);
      if (b == "0" || b == "1") bit = b[0] - '0';
    } catch (const std::exception&) {
      throw UsageError("--fix expects k=bit, got '" + f + "'");
    }
    if (bit < 0) throw UsageError("--fix bit must be 0 or 1, got '" + f + "'");
    if (mask.count(k)) throw UsageError("concept " + std::to_string(k) + " fixed twice");
    mask[k] = static_cast<std::uint8_t>(bit);
  }
  return mask;
}

struct InferenceFlags {
  double step = 0.1;
  std::size_t max_iters = 100;
  double tolerance = 1e-6;
  bool warm_start = false;
  std::size_t max_exact_free = 12;
  std::optional<double> lambda_concept;
  std::optional<double> lambda_global;

  void add(CLI::App* app) {
    app->add_option("--inf-step", step, "Inference step size");
    app->add_option("--inf-iters", max_iters, "Inference iteration cap");
    app->add_option("--inf-tol", tolerance, "Stop when the energy drops less");
    app->add_flag("--warm-start", warm_start, "Start from per-head posteriors");
    app->add_option("--max-exact-free", max_exact_free,
                    "Largest free-concept count enumerated exactly");
    app->add_option("--lambda-c-inf", lambda_concept,
                    "Concept energy weight at inference (default: checkpoint)");
    app->add_option("--lambda-g-inf", lambda_global,
                    "Global energy weight at inference (default: checkpoint)");
  }

  ecbm::infer::InferenceConfig config() const {
    ecbm::infer::InferenceConfig c;
    c.step = step;
    c.max_iters = max_iters;
    c.tolerance = tolerance;
    c.warm_start = warm_start;
    c.max_exact_free = max_exact_free;
    c.lambda_concept = lambda_concept;
    c.lambda_global = lambda_global;
    c.validate();
    return c;
  }

  json to_json() const {
    json j = {{"step", step},
              {"max_iters", max_iters},
              {"tolerance", tolerance},
              {"warm_start", warm_start},
              {"max_exact_free", max_exact_free}};
    if (lambda_concept) j["lambda_concept_inf"] = *lambda_concept;
    if (lambda_global) j["lambda_global_inf"] = *lambda_global;
    return j;
  }
};

// One example given by dataset index or inline features.
struct ExampleFlags {
  std::string data;
  std::optional<std::size_t> index;
  std::string features;

  void add(CLI::App* app) {
    app->add_option("--data", data, "Dataset file holding the example");
    app->add_option("--index", index, "Example index within --data");
    app->add_option("--features", features, "Inline comma-separated features");
  }

  std::vector<double> resolve(Run& run) const {
    if (!features.empty()) {
      if (index) throw UsageError("give either --features or --index, not both");
      return parse_numbers(features, "--features");
    }
    if (data.empty() || !index) {
      throw UsageError("need --features, or --data with --index");
    }
    run.inputs.push_back(data);
    const auto ds = ecbm::data::load_dataset(data);
    if (*index >= ds.size()) {
      throw ecbm::InvalidArgument("index " + std::to_string(*index) +
                                  " out of range for " + std::to_string(ds.size()) +
                                  " examples");
    }
    return ds.examples[*index].features;
  }
};

json vec_json(const std::vector<double>& v) { return json(v); }

json energies_json(const ecbm::EnergyBreakdown& e) {
  return {{"class", e.e_class},
          {"concept", e.e_concept},
          {"global", e.e_global},
          {"joint", e.e_joint}};
}

json prediction_json(const ecbm::infer::Prediction& p) {
  return {{"concept_probs", vec_json(p.state.concept_probs)},
          {"class_probs", vec_json(p.state.class_probs)},
          {"energies", energies_json(p.energies)},
          {"rounded", {{"concepts", p.concepts}, {"class", p.label}}},
          {"iterations", p.iterations}};
}

std::string history_tsv(const std::vector<ecbm::train::LossBreakdown>& h) {
  std::string out = "epoch\tl_class\tl_concept\tl_global\tl_total\n";
  for (std::size_t e = 0; e < h.size(); ++e) {
    out += std::to_string(e + 1) + "\t" + format_double(h[e].l_class) + "\t" +
           format_double(h[e].l_concept) + "\t" + format_double(h[e].l_global) +
           "\t" + format_double(h[e].l_total) + "\n";
  }
  return out;
}

volatile std::sig_atomic_t g_stop = 0;
ecbm::service::Server* g_server = nullptr;

void on_signal(int) {
  g_stop = 1;
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-based concept bottleneck models", "ecbm"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", ECBM_VERSION);
  Run run;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  std::string gen_spec, gen_out = "-";
  std::uint64_t gen_seed = 0;
  ecbm::data::GeneratorSpec gspec;
  std::string gen_couplings;
  gen->add_option("--spec", gen_spec, "Generator spec file (key = value lines)");
  gen->add_option("--seed", gen_seed, "Sampling seed");
  gen->add_option("--out,-o", gen_out, "Dataset path, - for stdout");
  gen->add_option("--K", gspec.num_concepts, "Concept count");
  gen->add_option("--M", gspec.num_classes, "Class count");
  gen->add_option("--f", gspec.feature_dim, "Feature dimension");
  gen->add_option("--N", gspec.num_examples, "Example count");
  gen->add_option("--epsilon", gspec.epsilon, "Concept bit-flip rate");
  gen->add_option("--sigma", gspec.sigma, "Feature noise scale");
  gen->add_option("--feature-seed", gspec.feature_seed, "Feature map seed");
  gen->add_option("--couplings", gen_couplings, "Coupled pairs, e.g. 0-1,2-3");

  // train
  auto* tr = app.add_subcommand("train", "Fit a model with minibatch SGD");
  std::string tr_data, tr_out, tr_history, tr_save_init, tr_init;
  ecbm::train::TrainConfig tcfg;
  ecbm::ModelConfig mcfg;
  std::uint64_t init_seed = 0;
  tr->add_option("--data", tr_data, "Training dataset")->required();
  tr->add_option("--out,-o", tr_out, "Checkpoint path")->required();
  tr->add_option("--history", tr_history,
                 "Loss history TSV (default: <out>.history.tsv)");
  tr->add_option("--init", tr_init, "Start from this checkpoint");
  tr->add_option("--save-init", tr_save_init, "Also write the initial checkpoint");
  tr->add_option("--init-seed", init_seed, "Parameter initialization seed");
  tr->add_option("--embed-dim", mcfg.embed_dim, "Embedding and hidden width");
  tr->add_option("--dropout", mcfg.dropout, "Head dropout probability");
  tr->add_option("--lambda-c-inf", mcfg.lambda_concept_inf,
                 "Concept energy weight stored for inference");
  tr->add_option("--lambda-g-inf", mcfg.lambda_global_inf,
                 "Global energy weight stored for inference");
  tr->add_option("--epochs", tcfg.epochs, "Training epochs");
  tr->add_option("--batch", tcfg.batch_size, "Minibatch size");
  tr->add_option("--lr", tcfg.learning_rate, "SGD learning rate");
  tr->add_option("--momentum", tcfg.momentum, "SGD momentum");
  tr->add_option("--lambda-c", tcfg.lambda_c, "Concept loss weight");
  tr->add_option("--lambda-g", tcfg.lambda_g, "Global loss weight");
  tr->add_option("--negatives", tcfg.negative_samples,
                 "Random negatives per batch for the global loss");
  tr->add_option("--perturb-fraction", tcfg.perturb_fraction,
                 "Share of examples with perturbed global-head concepts");
  tr->add_option("--perturb-bit-prob", tcfg.perturb_bit_prob,
                 "Bit flip probability within a perturbed example");
  tr->add_option("--seed", tcfg.seed, "Shuffle, perturbation and dropout seed");

  // eval
  auto* ev = app.add_subcommand("eval", "Concept, overall and class accuracy");
  std::string ev_model, ev_data, ev_out = "-", ev_summary;
  InferenceFlags ev_inf;
  ev->add_option("--model", ev_model, "Checkpoint")->required();
  ev->add_option("--data", ev_data, "Dataset")->required();
  ev->add_option("--out,-o", ev_out, "Metric table path, - for stdout");
  ev->add_option("--summary", ev_summary, "Also write a JSON summary here");
  ev_inf.add(ev);

  // predict
  auto* pr = app.add_subcommand("predict", "Gradient-based prediction for one example");
  std::string pr_model, pr_out = "-";
  ExampleFlags pr_ex;
  InferenceFlags pr_inf;
  pr->add_option("--model", pr_model, "Checkpoint")->required();
  pr->add_option("--out,-o", pr_out, "JSON output path, - for stdout");
  pr_ex.add(pr);
  pr_inf.add(pr);

  // intervene
  auto* iv = app.add_subcommand("intervene", "Fix concepts and re-infer the rest");
  std::string iv_model, iv_out = "-", iv_mode = "exact";
  std::vector<std::string> iv_fix;
  ExampleFlags iv_ex;
  InferenceFlags iv_inf;
  iv->add_option("--model", iv_model, "Checkpoint")->required();
  iv->add_option("--out,-o", iv_out, "Output path, - for stdout");
  iv->add_option("--fix", iv_fix, "Fixed concept k=bit, repeatable");
  iv->add_option("--mode", iv_mode, "exact or gradient")
      ->check(CLI::IsMember({"exact", "gradient"}));
  iv_ex.add(iv);
  iv_inf.add(iv);

  // interpret
  auto* ip = app.add_subcommand("interpret", "Dataset-level concept interpretation");
  std::string ip_model, ip_data, ip_out = "-", ip_query = "marginal",
                                  ip_mode = "soft", ip_plot, ip_concepts;
  std::size_t ip_class = 0, ip_k = 0, ip_kp = 1, ip_value = 1;
  ecbm::interpret::EstimatorConfig ecfg;
  InferenceFlags ip_inf;
  ip->add_option("--model", ip_model, "Checkpoint")->required();
  ip->add_option("--data", ip_data, "Dataset averaged over")->required();
  ip->add_option("--out,-o", ip_out, "ProbTable TSV path, - for stdout");
  ip->add_option("--query", ip_query, "marginal, joint, cond-class or cond")
      ->check(CLI::IsMember({"marginal", "joint", "cond-class", "cond"}));
  ip->add_option("--mode", ip_mode, "soft (Boltzmann) or hard (rounded counts)")
      ->check(CLI::IsMember({"soft", "hard"}));
  ip->add_option("--class", ip_class, "Class index");
  ip->add_option("--k", ip_k, "Target concept index");
  ip->add_option("--kp", ip_kp, "Conditioning concept index");
  ip->add_option("--value", ip_value, "Conditioning concept bit");
  ip->add_option("--concepts", ip_concepts,
                 "Bit string scored by the joint query, e.g. 0110");
  ip->add_option("--plot-data", ip_plot,
                 "Write the whole figure table (all k, or all k x kp pairs)");
  ip->add_option("--exact-limit", ecfg.exact_limit, "Largest K summed exactly");
  ip->add_option("--mc-samples", ecfg.monte_carlo_samples,
                 "Monte Carlo samples beyond the exact limit");
  ip->add_option("--seed", ecfg.seed, "Monte Carlo seed");
  ip_inf.add(ip);

  // curve
  auto* cv = app.add_subcommand("curve", "Accuracy versus share of intervened concepts");
  std::string cv_model, cv_data, cv_out = "-", cv_ratios = "0,0.25,0.5,0.75,1",
                                  cv_mode = "gradient";
  std::uint64_t cv_seed = 0;
  InferenceFlags cv_inf;
  cv->add_option("--model", cv_model, "Checkpoint")->required();
  cv->add_option("--data", cv_data, "Dataset")->required();
  cv->add_option("--out,-o", cv_out, "Curve TSV path, - for stdout");
  cv->add_option("--ratios", cv_ratios, "Comma-separated ratios in [0, 1]");
  cv->add_option("--mode", cv_mode, "exact or gradient")
      ->check(CLI::IsMember({"exact", "gradient"}));
  cv->add_option("--seed", cv_seed, "Seed of the per-example concept order");
  cv_inf.add(cv);

  // serve
  auto* sv = app.add_subcommand("serve", "HTTP/JSON service");
  std::string sv_model, sv_data, sv_host = "127.0.0.1", sv_split = "test";
  int sv_port = 8080;
  InferenceFlags sv_inf;
  sv->add_option("--model", sv_model, "Checkpoint")->required();
  sv->add_option("--data", sv_data, "Dataset served and interpreted")->required();
  sv->add_option("--split", sv_split, "Name of the served split");
  sv->add_option("--host", sv_host, "Bind address");
  sv->add_option("--port", sv_port, "Port, 0 picks a free one");
  sv_inf.add(sv);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(kUsage, "usage", e.what());
  }

  try {
    if (gen->parsed()) {
      run.command = "generate";
      ecbm::data::GeneratorSpec spec;
      if (!gen_spec.empty()) {
        run.inputs.push_back(gen_spec);
        spec = ecbm::data::parse_generator_spec(ecbm::read_file(gen_spec));
      }
      if (gen->count("--K")) spec.num_concepts = gspec.num_concepts;
      if (gen->count("--M")) spec.num_classes = gspec.num_classes;
      if (gen->count("--f")) spec.feature_dim = gspec.feature_dim;
      if (gen->count("--N")) spec.num_examples = gspec.num_examples;
      if (gen->count("--epsilon")) spec.epsilon = gspec.epsilon;
      if (gen->count("--sigma")) spec.sigma = gspec.sigma;
      if (gen->count("--feature-seed")) spec.feature_seed = gspec.feature_seed;
      if (gen->count("--couplings")) {
        spec = ecbm::data::parse_generator_spec(
            ecbm::data::format_generator_spec(spec) +
            "couplings = " + gen_couplings + "\n");
      }
      spec.validate();
      run.config = {{"spec", ecbm::data::format_generator_spec(spec)}};
      run.seeds = {{"seed", gen_seed}, {"feature_seed", spec.feature_seed}};
      run.emit(gen_out, ecbm::data::format_dataset(ecbm::data::generate(spec, gen_seed)));
      return kOk;
    }

    if (tr->parsed()) {
      run.command = "train";
      tcfg.validate();
      run.inputs.push_back(tr_data);
      const auto ds = ecbm::data::load_dataset(tr_data);
      ecbm::Theta init;
      if (!tr_init.empty()) {
        run.inputs.push_back(tr_init);
        init = ecbm::load_checkpoint(tr_init);
      } else {
        mcfg.num_concepts = ds.num_concepts;
        mcfg.num_classes = ds.num_classes;
        mcfg.feature_dim = ds.feature_dim;
        mcfg.validate();
        init = ecbm::Theta::initialize(mcfg, init_seed);
      }
      run.config = {{"epochs", tcfg.epochs},
                    {"batch", tcfg.batch_size},
                    {"lr", tcfg.learning_rate},
                    {"momentum", tcfg.momentum},
                    {"lambda_c", tcfg.lambda_c},
                    {"lambda_g", tcfg.lambda_g},
                    {"negatives", tcfg.negative_samples},
                    {"perturb_fraction", tcfg.perturb_fraction},
                    {"perturb_bit_prob", tcfg.perturb_bit_prob},
                    {"embed_dim", init.config().embed_dim},
                    {"dropout", init.config().dropout}};
      run.seeds = {{"seed", tcfg.seed}, {"init_seed", init_seed}};
      if (!tr_save_init.empty()) {
        ecbm::Theta copy = init;
        copy.set_lambdas(tcfg.lambda_c, tcfg.lambda_g,
                         copy.config().lambda_concept_inf,
                         copy.config().lambda_global_inf);
        run.emit(tr_save_init, ecbm::encode_checkpoint(copy));
      }
      const auto result = ecbm::train::train(
          init, ds, tcfg, [](std::size_t epoch, const ecbm::train::LossBreakdown& l) {
            std::cerr << "epoch " << epoch + 1 << " l_total " << format_double(l.l_total)
                      << "\n";
          });
      run.emit(tr_out, ecbm::encode_checkpoint(result.theta));
      run.emit(tr_history.empty() ? tr_out + ".history.tsv" : tr_history,
               history_tsv(result.history));
      return kOk;
    }

    if (ev->parsed()) {
      run.command = "eval";
      run.inputs = {ev_model, ev_data};
      run.config = {{"inference", ev_inf.to_json()}};
      const auto theta = ecbm::load_checkpoint(ev_model);
      const auto ds = ecbm::data::load_dataset(ev_data);
      const auto preds = ecbm::infer::predict_all(theta, ds, ev_inf.config());
      const auto s = ecbm::metrics::evaluate(preds, ds);
      run.emit(ev_out, ecbm::metrics::format_summary(s));
      if (!ev_summary.empty()) {
        json j = {{"concept_accuracy", s.concept_acc},
                  {"overall_concept_accuracy", s.overall_acc},
                  {"class_accuracy", s.class_acc},
                  {"examples", ds.size()}};
        if (ds.bayes_concept_accuracy) {
          j["bayes_concept_accuracy"] = *ds.bayes_concept_accuracy;
        }
        run.emit(ev_summary, j.dump(2) + "\n");
      }
      return kOk;
    }

    if (pr->parsed()) {
      run.command = "predict";
      run.inputs = {pr_model};
      run.config = {{"inference", pr_inf.to_json()}};
      const auto theta = ecbm::load_checkpoint(pr_model);
      const auto x = pr_ex.resolve(run);
      const auto p = ecbm::infer::predict(theta, x, pr_inf.config());
      run.emit(pr_out, prediction_json(p).dump(2) + "\n");
      return kOk;
    }

    if (iv->parsed()) {
      run.command = "intervene";
      run.inputs = {iv_model};
      run.config = {{"inference", iv_inf.to_json()}, {"mode", iv_mode}, {"fix", iv_fix}};
      const auto theta = ecbm::load_checkpoint(iv_model);
      const auto x = iv_ex.resolve(run);
      const auto mask = parse_fixes(iv_fix);
      if (iv_mode == "exact") {
        run.emit(iv_out,
                 ecbm::infer::intervene_exact(theta, x, mask, iv_inf.config()).to_tsv());
      } else {
        const auto p =
            ecbm::infer::intervene_gradient(theta, x, mask, iv_inf.config());
        json j = prediction_json(p);
        j["fixed"] = json::object();
        for (const auto& [k, b] : mask) j["fixed"][std::to_string(k)] = b;
        run.emit(iv_out, j.dump(2) + "\n");
      }
      return kOk;
    }

    if (ip->parsed()) {
      run.command = "interpret";
      run.inputs = {ip_model, ip_data};
      const auto theta = ecbm::load_checkpoint(ip_model);
      const auto ds = ecbm::data::load_dataset(ip_data);
      ecfg.mode = ip_mode == "hard" ? ecbm::interpret::EstimateMode::kHard
                                    : ecbm::interpret::EstimateMode::kSoft;
      ecfg.inference = ip_inf.config();
      ecfg.validate();
      run.config = {{"query", ip_query}, {"mode", ip_mode},  {"class", ip_class},
                    {"k", ip_k},         {"kp", ip_kp},      {"value", ip_value},
                    {"exact_limit", ecfg.exact_limit},
                    {"mc_samples", ecfg.monte_carlo_samples},
                    {"inference", ip_inf.to_json()}};
      run.seeds = {{"seed", ecfg.seed}};
      if (ip_value > 1) throw UsageError("--value must be 0 or 1");
      using ecbm::interpret::QueryKind;
      ecbm::interpret::Query q;
      q.label = ip_class;
      q.k = ip_k;
      q.k_prime = ip_kp;
      q.value = static_cast<std::uint8_t>(ip_value);
      q.kind = ip_query == "marginal"     ? QueryKind::kMarginal
               : ip_query == "joint"      ? QueryKind::kJoint
               : ip_query == "cond-class" ? QueryKind::kCondClass
                                          : QueryKind::kCond;
      std::string out;
      if (q.kind == QueryKind::kJoint && !ip_concepts.empty()) {
        ecbm::ConceptBits c;
        for (char ch : ip_concepts) {
          if (ch != '0' && ch != '1') throw UsageError("--concepts must be a bit string");
          c.push_back(static_cast<std::uint8_t>(ch - '0'));
        }
        const auto j =
            ecbm::interpret::joint_concept_importance(theta, ds, ip_class, c, ecfg);
        out = "score\n" + format_double(j.score) + "\n";
      } else {
        out = ecbm::interpret::estimate(theta, ds, q, ecfg).to_tsv();
      }
      run.emit(ip_out, out);
      if (!ip_plot.empty()) {
        const std::size_t kk = theta.config().num_concepts;
        std::string plot;
        if (q.kind == QueryKind::kMarginal) {
          plot = "k\tp1\n";
          for (std::size_t k = 0; k < kk; ++k) {
            q.k = k;
            plot += std::to_string(k) + "\t" +
                    format_double(ecbm::interpret::estimate(theta, ds, q, ecfg).at({1})) +
                    "\n";
          }
        } else if (q.kind == QueryKind::kJoint) {
          plot = ecbm::interpret::estimate(theta, ds, q, ecfg).to_tsv();
        } else {
          plot = "k\tkp\tp1\n";
          for (std::size_t k = 0; k < kk; ++k) {
            for (std::size_t kp = 0; kp < kk; ++kp) {
              if (k == kp) continue;
              q.k = k;
              q.k_prime = kp;
              const auto t = ecbm::interpret::estimate(theta, ds, q, ecfg);
              plot += std::to_string(k) + "\t" + std::to_string(kp) + "\t" +
                      (t.defined ? format_double(t.at({1})) : std::string("nan")) +
                      "\n";
            }
          }
        }
        run.emit(ip_plot, plot);
      }
      return kOk;
    }

    if (cv->parsed()) {
      run.command = "curve";
      run.inputs = {cv_model, cv_data};
      run.config = {{"ratios", cv_ratios}, {"mode", cv_mode},
                    {"inference", cv_inf.to_json()}};
      run.seeds = {{"seed", cv_seed}};
      const auto ratios = parse_numbers(cv_ratios, "--ratios");
      const auto theta = ecbm::load_checkpoint(cv_model);
      const auto ds = ecbm::data::load_dataset(cv_data);
      const auto points = ecbm::metrics::intervention_curve(
          theta, ds, ratios,
          cv_mode == "exact" ? ecbm::metrics::InterventionMode::kExact
                             : ecbm::metrics::InterventionMode::kGradient,
          cv_seed, cv_inf.config());
      std::string out =
          "ratio\tfixed\tconcept_accuracy\toverall_concept_accuracy\tclass_accuracy\n";
      for (const auto& p : points) {
        out += format_double(p.ratio) + "\t" + std::to_string(p.fixed) + "\t" +
               format_double(p.metrics.concept_acc) + "\t" +
               format_double(p.metrics.overall_acc) + "\t" +
               format_double(p.metrics.class_acc) + "\n";
      }
      run.emit(cv_out, out);
      return kOk;
    }

    if (sv->parsed()) {
      auto theta = ecbm::load_checkpoint(sv_model);
      std::map<std::string, ecbm::data::Dataset> splits;
      splits[sv_split] = ecbm::data::load_dataset(sv_data);
      const auto state = ecbm::service::make_state(std::move(theta), std::move(splits),
                                                   sv_split, sv_inf.config());
      ecbm::service::Server server(state);
      const int port = server.bind(sv_host, sv_port);
      if (port < 0) {
        return fail(kInput, "bind", "cannot bind " + sv_host + ":" +
                                        std::to_string(sv_port));
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on http://" << sv_host << ":" << port << "\n";
      server.serve();
      g_server = nullptr;
      return kOk;
    }
  } catch (const UsageError& e) {
    return fail(kUsage, "usage", e.what());
  } catch (const ecbm::NumericalError& e) {
    return fail(kNumerical, "numerical", e.what());
  } catch (const ecbm::EnumerationLimit& e) {
    return fail(kInput, "enumeration_limit", e.what());
  } catch (const ecbm::ParseError& e) {
    return fail(kInput, "parse", e.what());
  } catch (const ecbm::ShapeError& e) {
    return fail(kInput, "shape", e.what());
  } catch (const ecbm::Error& e) {
    return fail(kInput, "input", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(kInput, "io", e.what());
  }
  return kUsage;
}
