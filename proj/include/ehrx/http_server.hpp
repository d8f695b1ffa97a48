/*
 * Copyright 2026 The ehrx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <memory>
#include <string>

#include "ehrx/service.hpp"
#include "httplib.h"

namespace ehrx::service {

// Forwards /api/* to AppState::handle and serves static_dir (if set) at /.
inline void install_routes(httplib::Server& server, AppState& state) {
  auto forward = [&state](const httplib::Request& req, httplib::Response& res) {
    Query query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const ApiResponse r = state.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get(R"(/api/.*)", forward);
  server.Post(R"(/api/.*)", forward);
  server.Put(R"(/api/.*)", forward);
  server.Delete(R"(/api/.*)", forward);
  server.Patch(R"(/api/.*)", forward);
  const auto& dir = state.config().static_dir;
  if (!dir.empty() && !server.set_mount_point("/", dir.string())) {
    fail(ErrorCode::kIo, "static directory not found: " + dir.string());
  }
}

// Blocks until the server is stopped.
inline void serve(AppState& state) {
  httplib::Server server;
  install_routes(server, state);
  if (!server.listen(state.config().host, state.config().port)) {
    fail(ErrorCode::kIo, "cannot listen on " + state.config().host + ":" +
                             std::to_string(state.config().port));
  }
}

}  // namespace ehrx::service
