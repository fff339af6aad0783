#pragma once

#include <charconv>
#include <optional>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "boss/api_schema.hpp"
#include "boss/service.hpp"

namespace boss::service {

/// not-found → 404; illegal state transitions and missing prerequisites → 409;
/// everything the caller can fix in the request → 422.
inline int status_for(const std::string& kind) {
  if (kind == "not-found") return 404;
  if (kind == "state" || kind == "sequencing") return 409;
  return 422;
}

namespace detail {

template <typename F>
void respond(httplib::Response& res, F&& handler) {
  try {
    const json body = handler();
    res.status = 200;
    res.set_content(body.dump(), "application/json");
  } catch (const Error& e) {
    res.status = status_for(e.kind());
    res.set_content(json{{"error", e.kind()}, {"message", e.what()}}.dump(), "application/json");
  } catch (const json::exception& e) {
    res.status = 422;
    res.set_content(json{{"error", "validation"}, {"message", e.what()}}.dump(), "application/json");
  } catch (const std::exception& e) {
    res.status = 500;
    res.set_content(json{{"error", "internal"}, {"message", e.what()}}.dump(), "application/json");
  }
}

inline json body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto j = json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

inline std::optional<long long> query_int(const httplib::Request& req, const std::string& name) {
  if (!req.has_param(name)) return std::nullopt;
  const auto v = req.get_param_value(name);
  long long out = 0;
  const auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size())
    throw ValidationError("query parameter " + name + " must be an integer, got '" + v + "'");
  return out;
}

inline std::size_t query_count(const httplib::Request& req, const std::string& name, std::size_t fallback) {
  const auto v = query_int(req, name);
  if (v && *v < 0) throw ValidationError("query parameter " + name + " must be nonnegative");
  return v ? static_cast<std::size_t>(*v) : fallback;
}

inline bool query_flag(const httplib::Request& req, const std::string& name, bool fallback) {
  if (!req.has_param(name)) return fallback;
  const auto v = req.get_param_value(name);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("query parameter " + name + " must be true or false, got '" + v + "'");
}

inline int path_int(const std::string& s) {
  int out = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || end != s.data() + s.size()) throw NotFound("no resource '" + s + "'");
  return out;
}

}  // namespace detail

/// Registers the JSON API on `server`.
inline void install_routes(httplib::Server& server, Engine& engine) {
  using detail::respond;
  using Req = httplib::Request;
  using Res = httplib::Response;

  server.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  server.Options(R"(.*)", [](const Req&, Res& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  server.Get("/schema", [](const Req&, Res& res) { respond(res, [] { return api_schema(); }); });
  server.Get("/presets", [](const Req&, Res& res) {
    respond(res, [] {
      json list = json::array();
      for (const auto& p : trainer::preset_table()) {
        auto j = trainer::to_json(p.apply({}));
        j["name"] = p.name;
        j["description"] = p.description;
        j["balance_methods"] = p.balance_methods;
        list.push_back(j);
      }
      return json{{"presets", list}};
    });
  });

  server.Post("/datasets/synthetic", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.create_synthetic(detail::body(req)); });
  });
  server.Post("/datasets/cifar10", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.ingest_cifar10(detail::body(req)); });
  });
  server.Get(R"(/datasets/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.dataset_info(req.matches[1]); });
  });
  server.Get(R"(/datasets/([^/]+)/samples)", [&](const Req& req, Res& res) {
    respond(res, [&] {
      return engine.samples(req.matches[1], detail::query_count(req, "offset", 0),
                            detail::query_count(req, "limit", 50), detail::query_flag(req, "unlabeled", true),
                            detail::query_flag(req, "audit", false));
    });
  });

  server.Get("/prototype-sets", [&](const Req& req, Res& res) {
    respond(res, [&] {
      std::optional<std::string> ds;
      if (req.has_param("dataset_id")) ds = req.get_param_value("dataset_id");
      return engine.prototype_sets(ds);
    });
  });
  server.Post("/prototype-sets", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.create_prototype_set(detail::body(req)); });
  });
  server.Get(R"(/prototype-sets/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.prototype_set(detail::path_int(req.matches[1])); });
  });
  server.Post(R"(/prototype-sets/([^/]+)/replace)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.replace_prototype(detail::path_int(req.matches[1]), detail::body(req)); });
  });

  server.Get("/runs", [&](const Req&, Res& res) { respond(res, [&] { return engine.runs(); }); });
  server.Post("/runs", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.start_run(detail::body(req)); });
  });
  server.Get(R"(/runs/([^/]+))", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.run_summary(req.matches[1]); });
  });
  server.Get(R"(/runs/([^/]+)/metrics)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.metrics(req.matches[1], detail::query_int(req, "since").value_or(-1)); });
  });
  server.Get(R"(/runs/([^/]+)/class-accuracies)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.class_accuracies(req.matches[1]); });
  });
  server.Get(R"(/runs/([^/]+)/class-counts)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.class_counts(req.matches[1]); });
  });
  server.Get(R"(/runs/([^/]+)/diagnosis)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.diagnosis(req.matches[1]); });
  });
  server.Get(R"(/runs/([^/]+)/pseudo-labels)", [&](const Req& req, Res& res) {
    respond(res, [&] {
      std::optional<std::size_t> top;
      std::optional<int> cls;
      if (req.has_param("top")) top = detail::query_count(req, "top", 0);
      if (auto c = detail::query_int(req, "class")) cls = static_cast<int>(*c);
      return engine.pseudo_labels(req.matches[1], top, cls, detail::query_flag(req, "audit", false));
    });
  });
  server.Post(R"(/runs/([^/]+)/self-train)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.self_train(req.matches[1], detail::body(req)); });
  });
  server.Post(R"(/runs/([^/]+)/stop)", [&](const Req& req, Res& res) {
    respond(res, [&] { return engine.stop(req.matches[1]); });
  });
}

/// An API server on a background thread.
class HttpServer {
 public:
  explicit HttpServer(Engine& engine) { install_routes(server_, engine); }
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;
  ~HttpServer() { stop(); }

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host = "127.0.0.1", int port = 0) {
    const int bound = port == 0 ? server_.bind_to_any_port(host) : (server_.bind_to_port(host, port) ? port : -1);
    if (bound < 0) throw UsageError("cannot bind " + host + ":" + std::to_string(port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return bound;
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Server& server() noexcept { return server_; }

 private:
  httplib::Server server_;
  std::thread thread_;
};

}  // namespace boss::service
