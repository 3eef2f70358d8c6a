// Copyright 2026 The ECBM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// HTTP/JSON facade over a frozen model and its datasets.
//
//   GET  /health
//   GET  /model
//   GET  /examples?split=&index=
//   POST /predict              {features}
//   POST /intervene            {features, fixed: {index: bit}, mode}
//   GET  /interpret/marginal?class=
//   GET  /interpret/conditional?k=&kp=&ckp=[&class=]
//
// Errors: 400 malformed request, 404 unknown route or example, 422 exact
// enumeration over the limit, 500 numerical failure.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ecbm/data.hpp"
#include "ecbm/inference.hpp"
#include "ecbm/interpret.hpp"
#include "ecbm/model.hpp"

namespace ecbm::service {

/// Read-only after construction.
struct ServiceState {
  Theta theta;
  std::map<std::string, data::Dataset> splits;
  /// Split the interpretation endpoints average over.
  std::string interpret_split;
  std::vector<std::string> concept_names;
  std::vector<std::string> class_names;
  infer::InferenceConfig inference;
  interpret::EstimatorConfig estimator;
  /// p(c_k = 1 | y) per class, filled by make_state.
  std::vector<std::vector<double>> marginal_cache;
};

/// Validates dimensions, fills default names and the marginal cache.
ServiceState make_state(Theta theta, std::map<std::string, data::Dataset> splits,
                        std::string interpret_split,
                        infer::InferenceConfig inference = {},
                        interpret::EstimatorConfig estimator = {});

struct Response {
  int status = 200;
  std::string body;
};

/// Pure request handler; `query` holds decoded URL parameters.
Response handle(const ServiceState& state, const std::string& method,
                const std::string& path,
                const std::map<std::string, std::string>& query,
                const std::string& body);

class Server {
 public:
  explicit Server(const ServiceState& state);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and serves until stop(); port 0 picks a free port.
  bool listen(const std::string& host, int port);
  /// Binds without serving; returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves on a socket from bind().
  bool serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace ecbm::service
