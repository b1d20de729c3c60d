#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "coach/persistence.hpp"
#include "coach/task_service.hpp"

namespace httplib {
class Server;
}

namespace coach {

struct ApiRequest {
  std::string method;
  std::string path;
  std::multimap<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lowercase names
  std::string body;

  std::optional<std::string> header(std::string_view name) const;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::map<std::string, std::string> headers;

  nlohmann::json json() const { return nlohmann::json::parse(body); }
};

struct ApiConfig {
  std::chrono::milliseconds token_ttl = std::chrono::hours(12);
  std::vector<std::string> cors_origins;
  nlohmann::json description = nlohmann::json::object();  // served at /spec
};

/// Route table: method and path pattern ({id} marks the task id segment).
struct RouteInfo {
  std::string method;
  std::string pattern;
};
const std::vector<RouteInfo>& api_routes();

/// HTTP boundary. Handlers validate the request, delegate to TaskService or
/// Store and serialize the result; transport is separate (HttpServer).
class ApiService {
 public:
  ApiService(TaskService& tasks, Store& store, ApiConfig config, Clock clock = system_now);

  ApiResponse handle(const ApiRequest& request);

  std::size_t active_tokens();

 private:
  struct TokenInfo {
    std::string user_id;
    Timestamp expires_at;
  };

  ApiResponse dispatch(const ApiRequest& request);
  std::string require_user(const ApiRequest& request);
  void apply_cors(const ApiRequest& request, ApiResponse& response) const;

  ApiResponse register_user(const ApiRequest& r);
  ApiResponse login(const ApiRequest& r);
  ApiResponse create_task(const ApiRequest& r);
  ApiResponse get_task(const std::string& id);
  ApiResponse submit(const std::string& id, const ApiRequest& r);
  ApiResponse advance(const std::string& id);
  ApiResponse messages(const std::string& id, const ApiRequest& r);
  ApiResponse resources(const ApiRequest& r);

  TaskService& tasks_;
  Store& store_;
  ApiConfig config_;
  Clock clock_;

  std::mutex token_mu_;
  std::map<std::string, TokenInfo> tokens_;
};

int http_status(ErrorCode code);

/// cpp-httplib front end for an ApiService.
class HttpServer {
 public:
  explicit HttpServer(ApiService& api);
  ~HttpServer();

  /// Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host, int port);
  /// Blocks serving on the calling thread.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  ApiService& api_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace coach
