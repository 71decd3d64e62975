#include "engage/http_service.hpp"

#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace engage {

using nlohmann::json;

namespace {

ApiErrorCode code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::not_found: return ApiErrorCode::not_found;
    case ErrorKind::exhausted: return ApiErrorCode::exhausted;
    default: return ApiErrorCode::validation;
  }
}

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, const ApiError& error) {
  reply(res, http_status(error.code()), api_error_to_json(error));
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      fn(req, res);
    } catch (const ApiError& e) {
      reply_error(res, e);
    } catch (const Error& e) {
      reply_error(res, ApiError(code_for(e.kind()), e.what()));
    } catch (const json::exception& e) {
      reply_error(res, ApiError(ApiErrorCode::validation, std::string("malformed request body: ") + e.what()));
    }
  };
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  auto doc = json::parse(req.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw ApiError(ApiErrorCode::validation, "request body must be a JSON object");
  }
  return doc;
}

EngagementLevel strict_level(const json& v) {
  if (!v.is_string()) throw ApiError(ApiErrorCode::validation, "level must be \"low\", \"medium\" or \"high\"");
  const auto text = v.get<std::string>();
  if (text == "low") return EngagementLevel::low;
  if (text == "medium") return EngagementLevel::medium;
  if (text == "high") return EngagementLevel::high;
  throw ApiError(ApiErrorCode::validation, "level must be \"low\", \"medium\" or \"high\", got \"" + text + "\"");
}

}  // namespace

struct HttpService::Impl {
  explicit Impl(SessionManager& m) : manager(m) { routes(); }

  void routes() {
    server.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      CreateSessionRequest request;
      if (!body.contains("student_id") || !body.contains("model_id")) {
        throw ApiError(ApiErrorCode::validation, "student_id and model_id are required");
      }
      request.student_id = body.at("student_id").get<std::string>();
      request.model_id = body.at("model_id").get<std::string>();
      request.episodes = body.value("episodes", request.episodes);
      request.batch = body.value("batch", request.batch);
      reply(res, 201, session_state_to_json(manager.create_session(request)));
    }));
    server.Get(R"(/v1/sessions/([^/]+)/batch)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, batch_to_json(manager.get_query_batch(req.matches[1])));
    }));
    server.Post(R"(/v1/sessions/([^/]+)/labels)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.contains("labels") || !body["labels"].is_array()) {
        throw ApiError(ApiErrorCode::validation, "labels must be an array of {pool_id, level}");
      }
      std::vector<std::pair<PoolId, EngagementLevel>> labels;
      for (const auto& item : body["labels"]) {
        if (!item.is_object() || !item.contains("pool_id") || !item["pool_id"].is_number_integer() ||
            !item.contains("level")) {
          throw ApiError(ApiErrorCode::validation, "each label needs an integer pool_id and a level");
        }
        labels.emplace_back(item["pool_id"].get<PoolId>(), strict_level(item["level"]));
      }
      reply(res, 200, session_state_to_json(manager.submit_labels(req.matches[1], labels)));
    }));
    server.Get(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, session_state_to_json(manager.get_status(req.matches[1])));
    }));
    server.Delete(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      reply(res, 200, session_state_to_json(manager.abort_session(req.matches[1])));
    }));
  }

  SessionManager& manager;
  httplib::Server server;
  std::thread worker;
  int port = -1;
};

HttpService::HttpService(SessionManager& manager) : impl_(std::make_unique<Impl>(manager)) {}

HttpService::~HttpService() { stop(); }

int HttpService::start(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) throw Error(ErrorKind::validation, "cannot bind " + host + ":" + std::to_string(port));
  impl_->worker = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpService::wait() {
  if (impl_->worker.joinable()) impl_->worker.join();
}

void HttpService::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->worker.joinable()) impl_->worker.join();
}

int HttpService::port() const { return impl_->port; }

}  // namespace engage
