#include "coach/api_service.hpp"

#include <httplib.h>
#include <sodium.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <regex>

#include "coach/api_json.hpp"

namespace coach {

using nlohmann::json;

namespace {

ApiResponse reply(int status, const json& body) { return {status, body.dump(), {}}; }

ApiResponse error_reply(const Error& e) { return reply(http_status(e.code()), wire::to_json(e)); }

json parse_body(const ApiRequest& r) {
  auto doc = json::parse(r.body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::BadRequest, "request body must be a JSON object");
  }
  return doc;
}

std::string string_field(const json& doc, const char* name) {
  auto it = doc.find(name);
  if (it == doc.end() || !it->is_string()) {
    throw Error(ErrorCode::BadRequest, std::string("field '") + name + "' must be a string", name);
  }
  return it->get<std::string>();
}

std::string new_token() {
  unsigned char bytes[32];
  randombytes_buf(bytes, sizeof bytes);
  char hex[sizeof bytes * 2 + 1];
  sodium_bin2hex(hex, sizeof hex, bytes, sizeof bytes);
  return hex;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

const std::vector<RouteInfo>& api_routes() {
  static const std::vector<RouteInfo> routes = {
      {"GET", "/healthz"},
      {"GET", "/spec"},
      {"POST", "/auth/register"},
      {"POST", "/auth/login"},
      {"POST", "/tasks"},
      {"GET", "/tasks/{id}"},
      {"POST", "/tasks/{id}/submit"},
      {"POST", "/tasks/{id}/advance"},
      {"GET", "/tasks/{id}/messages"},
      {"POST", "/tasks/{id}/resources"},
  };
  return routes;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAssignment:
    case ErrorCode::ValidationRejected:
    case ErrorCode::BadRequest:
    case ErrorCode::UnparsableUrl: return 400;
    case ErrorCode::Unauthorized:
    case ErrorCode::AuthFailed: return 401;
    case ErrorCode::Forbidden: return 403;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::Busy:
    case ErrorCode::DuplicateUsername: return 409;
    case ErrorCode::SessionCompleted:
    case ErrorCode::InputNotAccepted:
    case ErrorCode::MissingSubmission:
    case ErrorCode::MissingSection:
    case ErrorCode::WrongStage: return 422;
    case ErrorCode::ProviderUnavailable:
    case ErrorCode::MalformedResponse: return 502;
    default: return 500;
  }
}

std::optional<std::string> ApiRequest::header(std::string_view name) const {
  auto it = headers.find(lower(std::string(name)));
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

ApiService::ApiService(TaskService& tasks, Store& store, ApiConfig config, Clock clock)
    : tasks_(tasks), store_(store), config_(std::move(config)), clock_(std::move(clock)) {}

std::size_t ApiService::active_tokens() {
  std::lock_guard lock(token_mu_);
  const Timestamp now = clock_();
  return static_cast<std::size_t>(std::count_if(tokens_.begin(), tokens_.end(),
                                                [&](const auto& t) { return t.second.expires_at > now; }));
}

void ApiService::apply_cors(const ApiRequest& request, ApiResponse& response) const {
  auto origin = request.header("origin");
  if (!origin) return;
  if (std::find(config_.cors_origins.begin(), config_.cors_origins.end(), *origin) == config_.cors_origins.end()) {
    return;
  }
  response.headers["Access-Control-Allow-Origin"] = *origin;
  response.headers["Access-Control-Allow-Headers"] = "Authorization, Content-Type";
  response.headers["Access-Control-Allow-Methods"] = "GET, POST, OPTIONS";
  response.headers["Vary"] = "Origin";
}

ApiResponse ApiService::handle(const ApiRequest& request) {
  ApiResponse response;
  try {
    response = dispatch(request);
  } catch (const Error& e) {
    response = error_reply(e);
  } catch (const std::exception& e) {
    spdlog::error("{} {} failed: {}", request.method, request.path, e.what());
    response = reply(500, {{"code", "Internal"}, {"message", "internal error"}});
  }
  response.headers["Content-Type"] = "application/json";
  apply_cors(request, response);
  return response;
}

std::string ApiService::require_user(const ApiRequest& request) {
  auto auth = request.header("authorization");
  const std::string prefix = "Bearer ";
  if (!auth || auth->size() <= prefix.size() || auth->compare(0, prefix.size(), prefix) != 0) {
    throw Error(ErrorCode::Unauthorized, "missing bearer token");
  }
  const std::string token = auth->substr(prefix.size());
  std::lock_guard lock(token_mu_);
  auto it = tokens_.find(token);
  if (it == tokens_.end()) throw Error(ErrorCode::Unauthorized, "unknown or expired token");
  if (it->second.expires_at <= clock_()) {
    tokens_.erase(it);
    throw Error(ErrorCode::Unauthorized, "unknown or expired token");
  }
  return it->second.user_id;
}

ApiResponse ApiService::dispatch(const ApiRequest& r) {
  static const std::regex task_route(R"(^/tasks/([0-9a-f]{1,64})(/(submit|advance|messages|resources))?$)");

  if (r.method == "OPTIONS") return {204, {}, {}};
  if (r.path == "/healthz" && r.method == "GET") return reply(200, {{"status", "ok"}});
  if (r.path == "/spec" && r.method == "GET") return reply(200, config_.description);
  if (r.path == "/auth/register" && r.method == "POST") return register_user(r);
  if (r.path == "/auth/login" && r.method == "POST") return login(r);
  if (r.path == "/tasks" && r.method == "POST") return create_task(r);

  std::smatch m;
  if (std::regex_match(r.path, m, task_route)) {
    const std::string id = m[1];
    const std::string action = m[3];
    const bool is_get = r.method == "GET";
    const bool is_post = r.method == "POST";
    const bool known = (action.empty() && is_get) || (action == "messages" && is_get) ||
                       ((action == "submit" || action == "advance" || action == "resources") && is_post);
    if (known) {
      const std::string user = require_user(r);
      tasks_.check_owner(id, user);
      if (action.empty()) return get_task(id);
      if (action == "submit") return submit(id, r);
      if (action == "advance") return advance(id);
      if (action == "messages") return messages(id, r);
      return resources(r);
    }
  } else if (r.path.rfind("/tasks/", 0) == 0) {
    // Every /tasks route demands a token, even for ids that cannot exist.
    require_user(r);
    throw Error(ErrorCode::NotFound, "no such task");
  }
  return reply(404, {{"code", "NotFound"}, {"message", "no such route"}});
}

ApiResponse ApiService::register_user(const ApiRequest& r) {
  const json body = parse_body(r);
  const std::string username = string_field(body, "username");
  const std::string password = string_field(body, "password");
  const std::string id = store_.create_user(username, password);
  return reply(200, {{"user_id", id}, {"username", username}});
}

ApiResponse ApiService::login(const ApiRequest& r) {
  const json body = parse_body(r);
  const std::string user = store_.authenticate(string_field(body, "username"), string_field(body, "password"));
  const std::string token = new_token();
  const Timestamp expires = clock_() + config_.token_ttl.count();
  {
    std::lock_guard lock(token_mu_);
    tokens_[token] = {user, expires};
  }
  return reply(200, {{"token", token}, {"user_id", user}, {"expires_at", expires}});
}

ApiResponse ApiService::create_task(const ApiRequest& r) {
  const std::string user = require_user(r);
  const json body = parse_body(r);
  auto state = tasks_.create_task(user, string_field(body, "assignment_prompt"));
  return reply(200, wire::task_view(state));
}

ApiResponse ApiService::get_task(const std::string& id) {
  auto state = tasks_.load(id);
  return reply(200, wire::task_view(state, tasks_.latest_analysis(state)));
}

ApiResponse ApiService::submit(const std::string& id, const ApiRequest& r) {
  const json body = parse_body(r);
  auto result = tasks_.submit(id, string_field(body, "input"));
  const auto& outcome = result.outcome;
  if (!outcome.accepted) {
    json err{{"code", "ValidationRejected"},
             {"message", outcome.validation.redirect_message.value_or("please revise your input")},
             {"detail", {{"validation", wire::to_json(outcome.validation)}}}};
    return reply(400, err);
  }
  json out = result.feedback ? wire::to_json(*result.feedback) : json::object();
  out["validation"] = wire::to_json(outcome.validation);
  out["stage_after"] = stage_name(outcome.stage_after);
  out["task"] = wire::task_view(result.state);
  if (!out.contains("feedback")) out["feedback"] = nullptr;
  if (!out.contains("annotations")) out["annotations"] = json::array();
  if (!out.contains("unmatched")) out["unmatched"] = json::array();

  if (outcome.feedback_error && http_status(outcome.feedback_error->code()) == 502) {
    json err = wire::to_json(*outcome.feedback_error);
    err["detail"] = {{"saved", true}, {"task", out["task"]}};
    return reply(502, err);
  }
  return reply(200, out);
}

ApiResponse ApiService::advance(const std::string& id) {
  auto result = tasks_.advance(id);
  return reply(200, wire::task_view(result.state, result.analysis));
}

ApiResponse ApiService::messages(const std::string& id, const ApiRequest& r) {
  std::optional<Stage> stage;
  if (auto it = r.query.find("stage"); it != r.query.end() && !it->second.empty()) {
    stage = stage_from_name(it->second);
    if (!stage) throw Error(ErrorCode::BadRequest, "unknown stage", it->second);
  }
  json out = json::array();
  for (const auto& m : tasks_.messages(id, stage)) out.push_back(wire::to_json(m));
  return reply(200, out);
}

ApiResponse ApiService::resources(const ApiRequest& r) {
  const json body = parse_body(r);
  auto urls = body.find("urls");
  if (urls == body.end() || !urls->is_array() ||
      !std::all_of(urls->begin(), urls->end(), [](const json& u) { return u.is_string(); })) {
    throw Error(ErrorCode::BadRequest, "field 'urls' must be an array of strings", "urls");
  }
  const bool use_llm = body.value("use_llm", false);
  json out = json::array();
  for (const auto& a : tasks_.evaluate_resources(urls->get<std::vector<std::string>>(), use_llm)) {
    out.push_back(wire::to_json(a));
  }
  return reply(200, out);
}

// ---------------------------------------------------------------------------

HttpServer::HttpServer(ApiService& api) : api_(api), server_(std::make_unique<httplib::Server>()) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [k, v] : req.params) request.query.emplace(k, v);
    for (const auto& [k, v] : req.headers) request.headers[lower(k)] = v;
    request.body = req.body;
    ApiResponse response = api_.handle(request);
    res.status = response.status;
    for (const auto& [k, v] : response.headers) {
      if (k != "Content-Type") res.set_header(k, v);
    }
    res.set_content(response.body, "application/json");
  };
  server_->Get(".*", handler);
  server_->Post(".*", handler);
  server_->Options(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  const int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::InvalidConfig, "cannot bind " + host + ":" + std::to_string(port));
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return bound;
}

bool HttpServer::listen(const std::string& host, int port) { return server_->listen(host, port); }

void HttpServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace coach
