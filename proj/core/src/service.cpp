// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#include "ecbm/service.hpp"

#include <httplib.h>

#include <charconv>
#include <json.hpp>

#include "ecbm/error.hpp"

namespace ecbm::service {

using json = nlohmann::json;

namespace {

struct HttpError {
  int status;
  std::string message;
};

std::size_t parse_index(const std::map<std::string, std::string>& query,
                        const std::string& key) {
  auto it = query.find(key);
  if (it == query.end()) throw HttpError{400, "missing parameter '" + key + "'"};
  std::size_t v = 0;
  const std::string& s = it->second;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw HttpError{400, "parameter '" + key + "' must be a non-negative integer"};
  }
  return v;
}

std::vector<double> parse_features(const ServiceState& state, const json& body) {
  if (!body.is_object() || !body.contains("features") ||
      !body["features"].is_array()) {
    throw HttpError{400, "body must be an object with a 'features' array"};
  }
  std::vector<double> x;
  for (const json& v : body["features"]) {
    if (!v.is_number()) throw HttpError{400, "features must be numbers"};
    x.push_back(v.get<double>());
  }
  if (x.size() != state.theta.config().feature_dim) {
    throw HttpError{400, "expected " +
                             std::to_string(state.theta.config().feature_dim) +
                             " features, got " + std::to_string(x.size())};
  }
  return x;
}

json energies_json(const EnergyBreakdown& e) {
  return {{"class", e.e_class},
          {"concept", e.e_concept},
          {"global", e.e_global},
          {"joint", e.e_joint}};
}

json prediction_json(const infer::Prediction& p) {
  return {{"concept_probs", p.state.concept_probs},
          {"class_probs", p.state.class_probs},
          {"energies", energies_json(p.energies)},
          {"rounded", {{"concepts", p.concepts}, {"class", p.label}}},
          {"iterations", p.iterations}};
}

json route(const ServiceState& state, const std::string& method,
           const std::string& path,
           const std::map<std::string, std::string>& query,
           const std::string& body) {
  const ModelConfig& cfg = state.theta.config();
  auto parse_body = [&] {
    try {
      return json::parse(body);
    } catch (const json::parse_error& e) {
      throw HttpError{400, std::string("malformed JSON: ") + e.what()};
    }
  };

  if (method == "GET" && path == "/health") return {{"status", "ok"}};
  if (method == "GET" && path == "/model") {
    return {{"K", cfg.num_concepts},
            {"M", cfg.num_classes},
            {"feature_dim", cfg.feature_dim},
            {"concept_names", state.concept_names},
            {"class_names", state.class_names},
            {"lambdas",
             {{"concept", cfg.lambda_concept},
              {"global", cfg.lambda_global},
              {"concept_inf", cfg.lambda_concept_inf},
              {"global_inf", cfg.lambda_global_inf}}},
            {"splits", [&] {
               json s = json::object();
               for (const auto& [name, ds] : state.splits) s[name] = ds.size();
               return s;
             }()}};
  }
  if (method == "GET" && path == "/examples") {
    auto split = query.find("split");
    const std::string name =
        split == query.end() ? state.interpret_split : split->second;
    auto it = state.splits.find(name);
    if (it == state.splits.end()) throw HttpError{404, "unknown split '" + name + "'"};
    const std::size_t idx = parse_index(query, "index");
    if (idx >= it->second.size()) {
      throw HttpError{404, "example " + std::to_string(idx) + " not in split '" +
                               name + "'"};
    }
    const data::Example& e = it->second.examples[idx];
    return {{"split", name},
            {"index", idx},
            {"features", e.features},
            {"concepts", e.concepts},
            {"label", e.label}};
  }
  if (method == "POST" && path == "/predict") {
    const json b = parse_body();
    const auto x = parse_features(state, b);
    return prediction_json(infer::predict(state.theta, x, state.inference));
  }
  if (method == "POST" && path == "/intervene") {
    const json b = parse_body();
    const auto x = parse_features(state, b);
    infer::InterventionMask mask;
    if (b.contains("fixed")) {
      if (!b["fixed"].is_object()) throw HttpError{400, "'fixed' must be an object"};
      for (const auto& [key, value] : b["fixed"].items()) {
        std::size_t k = 0;
        auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), k);
        if (ec != std::errc() || p != key.data() + key.size() ||
            k >= cfg.num_concepts) {
          throw HttpError{400, "bad concept index '" + key + "'"};
        }
        if (!value.is_number_integer() || (value != 0 && value != 1)) {
          throw HttpError{400, "fixed bits must be 0 or 1"};
        }
        mask[k] = static_cast<std::uint8_t>(value.get<int>());
      }
    }
    const std::string mode = b.value("mode", std::string("exact"));
    if (mode == "exact") {
      const auto m = infer::exact_marginals(state.theta, x, mask, state.inference);
      return {{"mode", "exact"},
              {"concept_probs", m.concept_probs},
              {"class_probs", m.class_probs},
              {"rounded",
               {{"concepts", infer::round_concepts(m.concept_probs)},
                {"class", infer::argmax(m.class_probs)}}}};
    }
    if (mode == "gradient") {
      json out = prediction_json(
          infer::intervene_gradient(state.theta, x, mask, state.inference));
      out["mode"] = "gradient";
      return out;
    }
    throw HttpError{400, "mode must be 'exact' or 'gradient'"};
  }
  if (method == "GET" && path == "/interpret/marginal") {
    const std::size_t y = parse_index(query, "class");
    if (y >= cfg.num_classes) throw HttpError{400, "class out of range"};
    json rows = json::array();
    for (std::size_t k = 0; k < cfg.num_concepts; ++k) {
      rows.push_back({{"k", k}, {"p1", state.marginal_cache[y][k]}});
    }
    return rows;
  }
  if (method == "GET" && path == "/interpret/conditional") {
    const std::size_t k = parse_index(query, "k");
    const std::size_t kp = parse_index(query, "kp");
    const std::size_t ckp = parse_index(query, "ckp");
    if (k >= cfg.num_concepts || kp >= cfg.num_concepts || k == kp || ckp > 1) {
      throw HttpError{400, "need distinct k, kp < K and ckp in {0, 1}"};
    }
    const data::Dataset& ds = state.splits.at(state.interpret_split);
    ProbTable t;
    json out = {{"k", k}, {"kp", kp}, {"ckp", ckp}};
    if (query.count("class")) {
      const std::size_t y = parse_index(query, "class");
      if (y >= cfg.num_classes) throw HttpError{400, "class out of range"};
      t = interpret::concept_conditional_given_class(
          state.theta, ds, k, kp, static_cast<std::uint8_t>(ckp), y,
          state.estimator);
      out["class"] = y;
    } else {
      t = interpret::concept_conditional(state.theta, ds, k, kp,
                                         static_cast<std::uint8_t>(ckp),
                                         state.estimator);
    }
    out["p1"] = t.defined ? json(t.probs[1]) : json(nullptr);
    return out;
  }
  throw HttpError{404, "no route for " + method + " " + path};
}

}  // namespace

ServiceState make_state(Theta theta, std::map<std::string, data::Dataset> splits,
                        std::string interpret_split,
                        infer::InferenceConfig inference,
                        interpret::EstimatorConfig estimator) {
  const ModelConfig& cfg = theta.config();
  for (const auto& [name, ds] : splits) {
    ds.validate();
    if (ds.num_concepts != cfg.num_concepts || ds.num_classes != cfg.num_classes ||
        ds.feature_dim != cfg.feature_dim) {
      throw ShapeError("split '" + name + "' does not match the model");
    }
  }
  if (!splits.count(interpret_split)) {
    throw InvalidArgument("unknown interpretation split '" + interpret_split + "'");
  }
  ServiceState s;
  s.theta = std::move(theta);
  s.splits = std::move(splits);
  s.interpret_split = std::move(interpret_split);
  s.inference = inference;
  s.estimator = estimator;
  for (std::size_t k = 0; k < cfg.num_concepts; ++k) {
    s.concept_names.push_back("concept " + std::to_string(k));
  }
  for (std::size_t y = 0; y < cfg.num_classes; ++y) {
    s.class_names.push_back("class " + std::to_string(y));
  }
  const data::Dataset& ds = s.splits.at(s.interpret_split);
  for (std::size_t y = 0; y < cfg.num_classes; ++y) {
    std::vector<double> row;
    if (!ds.empty()) {
      for (const ProbTable& t :
           interpret::marginal_concept_importance(s.theta, ds, y, estimator)) {
        row.push_back(t.probs[1]);
      }
    }
    s.marginal_cache.push_back(std::move(row));
  }
  return s;
}

Response handle(const ServiceState& state, const std::string& method,
                const std::string& path,
                const std::map<std::string, std::string>& query,
                const std::string& body) {
  try {
    return {200, route(state, method, path, query, body).dump()};
  } catch (const HttpError& e) {
    return {e.status, json{{"error", e.message}}.dump()};
  } catch (const EnumerationLimit& e) {
    return {422, json{{"error", e.what()}, {"hint", "use gradient mode"}}.dump()};
  } catch (const NumericalError& e) {
    return {500, json{{"error", e.what()}}.dump()};
  } catch (const Error& e) {
    return {400, json{{"error", e.what()}}.dump()};
  }
}

struct Server::Impl {
  explicit Impl(const ServiceState& s) : state(s) {}
  const ServiceState& state;
  httplib::Server server;
};

Server::Server(const ServiceState& state)
    : impl_(std::make_unique<Impl>(state)) {
  auto dispatch = [this](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const Response r = handle(impl_->state, req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  impl_->server.set_default_headers(
      {{"Access-Control-Allow-Origin", "*"},
       {"Access-Control-Allow-Headers", "Content-Type"},
       {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  impl_->server.Get(".*", dispatch);
  impl_->server.Post(".*", dispatch);
  impl_->server.Options(".*", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
  });
}

Server::~Server() = default;

bool Server::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int Server::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool Server::serve() { return impl_->server.listen_after_bind(); }

void Server::stop() { impl_->server.stop(); }

}  // namespace ecbm::service
