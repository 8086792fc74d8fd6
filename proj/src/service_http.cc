// Copyright 2026 The CXRBench Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>

#include "cxrbench/service.h"
#include "httplib.h"

namespace cxrbench::service {
namespace {

using nlohmann::json;

void Send(httplib::Response& res, const Response& r) {
  res.status = r.status;
  res.set_content(r.body.dump(), "application/json");
}

// Parses the request body; an empty body is an empty object.
bool ParseBody(const httplib::Request& req, httplib::Response& res, json& out) {
  if (req.body.empty()) {
    out = json::object();
    return true;
  }
  try {
    out = json::parse(req.body);
    return true;
  } catch (const json::exception& e) {
    Send(res, {400, {{"error", std::string("malformed JSON: ") + e.what()}}});
    return false;
  }
}

}  // namespace

struct HttpServer::Impl {
  Service& service;
  ServiceConfig config;
  httplib::Server server;
  std::string token;
};

HttpServer::HttpServer(Service& service, const ServiceConfig& config)
    : impl_(new Impl{service, config, {}, {}}) {
  if (!config.token_env.empty()) {
    const char* token = std::getenv(config.token_env.c_str());
    if (token == nullptr || *token == '\0') {
      throw std::runtime_error("environment variable " + config.token_env +
                               " (service token) is not set");
    }
    impl_->token = token;
  }
  auto& srv = impl_->server;
  Impl* impl = impl_.get();

  srv.set_pre_routing_handler([impl](const httplib::Request& req,
                                     httplib::Response& res) {
    if (impl->token.empty() || req.path.rfind("/v1/", 0) != 0 || req.path == "/v1/health") {
      return httplib::Server::HandlerResponse::Unhandled;
    }
    if (req.get_header_value("Authorization") != "Bearer " + impl->token) {
      Send(res, {401, {{"error", "missing or invalid bearer token"}}});
      return httplib::Server::HandlerResponse::Handled;
    }
    return httplib::Server::HandlerResponse::Unhandled;
  });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    Send(res, {500, {{"error", what}}});
  });

  srv.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
    Send(res, {200, {{"status", "ok"}}});
  });
  srv.Post("/v1/sessions", [impl](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (ParseBody(req, res, body)) Send(res, impl->service.CreateSession(body));
  });
  srv.Get(R"(/v1/sessions/([^/]+)/next)",
          [impl](const httplib::Request& req, httplib::Response& res) {
            Send(res, impl->service.NextItem(req.matches[1]));
          });
  srv.Post(R"(/v1/sessions/([^/]+)/annotations)",
           [impl](const httplib::Request& req, httplib::Response& res) {
             json body;
             if (ParseBody(req, res, body)) {
               Send(res, impl->service.PostAnnotation(req.matches[1], body));
             }
           });
  srv.Post(R"(/v1/sessions/([^/]+)/annotations/([^/]+)/correction)",
           [impl](const httplib::Request& req, httplib::Response& res) {
             json body;
             if (ParseBody(req, res, body)) {
               Send(res, impl->service.PostCorrection(req.matches[1], req.matches[2], body));
             }
           });
  srv.Post("/v1/battles/next", [impl](const httplib::Request& req, httplib::Response& res) {
    json body;
    if (ParseBody(req, res, body)) Send(res, impl->service.NextBattle(body));
  });
  srv.Post(R"(/v1/battles/([^/]+)/vote)",
           [impl](const httplib::Request& req, httplib::Response& res) {
             json body;
             if (ParseBody(req, res, body)) {
               Send(res, impl->service.PostVote(req.matches[1], body));
             }
           });
  srv.Get("/v1/stats", [impl](const httplib::Request&, httplib::Response& res) {
    Send(res, impl->service.Stats());
  });
  srv.Get("/v1/arena/ranking", [impl](const httplib::Request&, httplib::Response& res) {
    Send(res, impl->service.Ranking());
  });
  if (!config.image_dir.empty()) srv.set_mount_point("/images", config.image_dir);
  if (!config.static_dir.empty()) srv.set_mount_point("/", config.static_dir);
}

HttpServer::~HttpServer() = default;

bool HttpServer::Listen(const std::function<void(int)>& on_bound) {
  auto& srv = impl_->server;
  int port = impl_->config.port;
  if (port == 0) {
    port = srv.bind_to_any_port(impl_->config.host);
    if (port < 0) return false;
  } else if (!srv.bind_to_port(impl_->config.host, port)) {
    return false;
  }
  if (on_bound) on_bound(port);
  return srv.listen_after_bind();
}

void HttpServer::Stop() { impl_->server.stop(); }

}  // namespace cxrbench::service
