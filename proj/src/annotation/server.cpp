#include "asrimpact/annotation/server.hpp"

#include <httplib.h>

#include <algorithm>

namespace asrimpact::annotation {

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, Json{{"error", message}});
}

}  // namespace

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid: return 400;
    case ErrorKind::not_found: return 404;
    case ErrorKind::unknown_annotator: return 404;
    case ErrorKind::insufficient_overlap: return 409;
    case ErrorKind::conflict: return 409;
    case ErrorKind::storage: return 500;
  }
  return 500;
}

struct AnnotationServer::Impl {
  AnnotationStore& store;
  ServerOptions options;
  httplib::Server server;

  Impl(AnnotationStore& s, ServerOptions o) : store(s), options(std::move(o)) {}

  // Annotator id for the request's bearer token, or nullopt after replying 401.
  std::optional<std::string> caller(const httplib::Request& req, httplib::Response& res) const {
    const auto header = req.get_header_value("Authorization");
    const std::string prefix = "Bearer ";
    if (header.rfind(prefix, 0) == 0) {
      auto it = options.tokens.find(header.substr(prefix.size()));
      if (it != options.tokens.end()) return it->second;
    }
    send_error(res, 401, "missing or unknown bearer token");
    return std::nullopt;
  }

  template <typename Handler>
  void guarded(const httplib::Request& req, httplib::Response& res, Handler&& handler) const {
    const auto who = caller(req, res);
    if (!who) return;
    try {
      handler(*who);
    } catch (const ServiceError& e) {
      send_error(res, http_status(e.kind()), e.what());
    } catch (const SchemaError& e) {
      send_error(res, 400, e.what());
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, std::string("malformed request body: ") + e.what());
    }
  }

  void routes() {
    server.Get("/api/tasks/next", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& who) {
        const std::string annotator = req.has_param("annotator") ? req.get_param_value("annotator") : who;
        if (annotator != who) return send_error(res, 403, "token does not belong to annotator '" + annotator + "'");
        const auto task = store.next_task(annotator);
        if (task) return send_json(res, 200, Json{{"task", to_json_value(*task)}});
        send_json(res, 200, Json{{"task", nullptr}});
      });
    });

    server.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& who) {
        Json body = Json::parse(req.body);
        if (!body.contains("annotator_id")) body["annotator_id"] = who;
        auto record = body.get<AnnotationRecord>();
        if (record.annotator_id != who) {
          return send_error(res, 403, "token does not belong to annotator '" + record.annotator_id + "'");
        }
        send_json(res, 200, Json(store.submit_label(std::move(record))));
      });
    });

    server.Get("/api/agreement", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        Json pairs = Json::array();
        for (const auto& p : store.agreement()) pairs.push_back(to_json_value(p));
        send_json(res, 200, Json{{"pairs", pairs}});
      });
    });

    server.Get("/api/adjudication", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        Json queue = Json::array();
        for (const auto& b : store.adjudication_queue()) queue.push_back(to_json_value(b));
        send_json(res, 200, Json{{"queue", queue}});
      });
    });

    server.Post("/api/adjudication/resolve", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string& who) {
        const Json body = Json::parse(req.body);
        auto record = body.get<AdjudicationRecord>();
        if (std::find(record.resolver_ids.begin(), record.resolver_ids.end(), who) == record.resolver_ids.end()) {
          record.resolver_ids.push_back(who);
        }
        const bool if_unresolved = body.value("if_unresolved", false);
        send_json(res, 200, Json(store.resolve(std::move(record), if_unresolved)));
      });
    });

    server.Get("/api/export/gold", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(req, res, [&](const std::string&) {
        const auto gold = store.export_gold();
        send_json(res, 200, Json{{"count", gold.size()}, {"examples", gold}});
      });
    });

    if (options.static_dir && !server.set_mount_point("/", options.static_dir->string())) {
      throw std::invalid_argument("static directory '" + options.static_dir->string() + "' does not exist");
    }
  }
};

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerOptions options)
    : impl_(std::make_unique<Impl>(store, std::move(options))) {
  impl_->routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AnnotationServer::listen() {
  if (!impl_->server.listen_after_bind()) throw std::runtime_error("annotation server stopped with an error");
}

void AnnotationServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace asrimpact::annotation
