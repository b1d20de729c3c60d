#pragma once

// Shared fixtures for the unit and acceptance binaries.

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <mutex>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "coach/api_service.hpp"
#include "coach/llm_gateway.hpp"
#include "coach/persistence.hpp"
#include "coach/resource_eval.hpp"
#include "coach/task_service.hpp"

namespace testing {

inline std::filesystem::path data_dir() { return COACH_DATA_DIR; }
inline std::filesystem::path golden_dir() { return COACH_GOLDEN_DIR; }

inline nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  return nlohmann::json::parse(in);
}

inline std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline const coach::TemplateLibrary& templates() {
  static const auto lib = coach::TemplateLibrary::load(data_dir() / "templates");
  return lib;
}

inline const coach::ResourceEvaluator& evaluator() {
  static const coach::ResourceEvaluator ev(coach::PublicSuffixList::load(data_dir() / "public_suffix_list.dat"),
                                           coach::DomainAllowlist::load(data_dir() / "allowlist.txt"));
  return ev;
}

/// Deterministic clock: each reading is 1 ms after the previous one.
struct TickClock {
  std::shared_ptr<std::atomic<coach::Timestamp>> t = std::make_shared<std::atomic<coach::Timestamp>>(1'700'000'000'000);
  coach::Timestamp operator()() const { return t->fetch_add(1) + 1; }
  void jump(coach::Timestamp ms) const { t->fetch_add(ms); }
};

/// Scripted provider, in-memory store, task service and API wired together.
struct Stack {
  TickClock clock;
  std::unique_ptr<coach::Store> store;
  coach::ScriptedProvider provider;
  std::unique_ptr<coach::TaskService> tasks;
  std::unique_ptr<coach::ApiService> api;

  explicit Stack(std::unique_ptr<coach::Store> s = nullptr, coach::ApiConfig config = default_api_config(),
                 coach::LlmProvider* other_provider = nullptr) {
    store = s ? std::move(s) : std::make_unique<coach::InMemoryStore>(coach::PasswordHashing::minimal(), clock);
    coach::LlmProvider& llm = other_provider ? *other_provider : provider;
    tasks = std::make_unique<coach::TaskService>(*store, templates(), llm, evaluator(), 8, clock);
    api = std::make_unique<coach::ApiService>(*tasks, *store, std::move(config), clock);
  }

  static coach::ApiConfig default_api_config() {
    coach::ApiConfig c;
    c.cors_origins = {"http://localhost:5173"};
    c.description = read_json(data_dir() / "openapi.json");
    return c;
  }

  coach::ApiResponse call(const std::string& method, const std::string& path, const nlohmann::json& body = nullptr,
                          const std::string& token = {}) {
    coach::ApiRequest r;
    r.method = method;
    auto q = path.find('?');
    r.path = path.substr(0, q);
    if (q != std::string::npos) {
      std::string query = path.substr(q + 1);
      auto eq = query.find('=');
      r.query.emplace(query.substr(0, eq), eq == std::string::npos ? "" : query.substr(eq + 1));
    }
    if (!body.is_null()) r.body = body.dump();
    if (!token.empty()) r.headers["authorization"] = "Bearer " + token;
    return api->handle(r);
  }

  /// Registers and logs in; returns the token.
  std::string login(const std::string& user, const std::string& password = "correct horse") {
    call("POST", "/auth/register", {{"username", user}, {"password", password}});
    auto res = call("POST", "/auth/login", {{"username", user}, {"password", password}});
    return res.json().at("token").get<std::string>();
  }
};

}  // namespace testing

namespace testing {

/// One frozen encode_request fixture from tests/golden.
struct EncodeFixture {
  std::string name;
  coach::PromptBundle bundle;
  coach::MemoryWindow window;
  coach::ProviderConfig config;
  nlohmann::json expected;
};

inline std::vector<EncodeFixture> encode_fixtures() {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(golden_dir())) {
    if (e.path().filename().string().rfind("encode_", 0) == 0) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<EncodeFixture> out;
  for (const auto& f : files) {
    auto doc = read_json(f);
    EncodeFixture fx;
    fx.name = f.filename().string();
    const auto& b = doc.at("bundle");
    fx.bundle.stage = coach::stage_from_name(b.at("stage").get<std::string>()).value();
    fx.bundle.system_message = b.at("system_message");
    for (const auto& m : b.at("context_messages")) {
      fx.bundle.context_messages.push_back({coach::role_from_name(m.at("role").get<std::string>()).value(),
                                            m.at("content").get<std::string>()});
    }
    fx.bundle.user_message = b.at("user_message");
    for (const auto& p : doc.at("window").at("pinned")) {
      fx.window.pinned_artifacts.push_back({p.at("label"), p.at("text")});
    }
    for (const auto& t : doc.at("window").at("turns")) fx.window.recent_turns.push_back({t.at("user"), t.at("assistant")});
    fx.config.model = doc.at("config").at("model");
    fx.config.temperature = doc.at("config").at("temperature");
    fx.expected = doc.at("expected");
    out.push_back(std::move(fx));
  }
  return out;
}

/// Transport double: replays a queue of outcomes (the last one repeats) and
/// records every call.
class FakeTransport final : public coach::Transport {
 public:
  struct Outcome {
    int status = 200;  // 0 means "throw TransportError"
    std::string body;
  };
  struct Call {
    std::string path, body, bearer;
  };

  explicit FakeTransport(std::vector<Outcome> outcomes, std::string error_text = "connection refused")
      : outcomes_(std::move(outcomes)), error_text_(std::move(error_text)) {}

  coach::HttpReply post(const std::string& path, const std::string& body, const std::string& bearer) override {
    std::lock_guard lock(mu_);
    calls.push_back({path, body, bearer});
    Outcome o = outcomes_.empty() ? Outcome{0, {}} : outcomes_.front();
    if (!outcomes_.empty() && outcomes_.size() > 1) outcomes_.erase(outcomes_.begin());
    if (o.status == 0) throw coach::TransportError(error_text_);
    return {o.status, o.body};
  }

  static std::string completion(const std::string& content) {
    return nlohmann::json{{"id", "cmpl-1"},
                          {"object", "chat.completion"},
                          {"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"total_tokens", 12}}}}
        .dump();
  }

  std::vector<Call> calls;

 private:
  std::mutex mu_;
  std::vector<Outcome> outcomes_;
  std::string error_text_;
};

}  // namespace testing

namespace testing {

inline nlohmann::json walkthrough() { return read_json(data_dir() / "fixtures" / "walkthrough.json"); }

/// Plays the walkthrough steps straight against the task service.
/// Returns the task id; checks each step's expected stage as it goes.
inline std::string play_walkthrough(coach::TaskService& tasks, const std::string& user_id,
                                    std::vector<std::string>* problems = nullptr) {
  const auto doc = walkthrough();
  auto state = tasks.create_task(user_id, doc.at("assignment_prompt").get<std::string>());
  for (const auto& step : doc.at("steps")) {
    const std::string stage = step.at("stage");
    if (problems && coach::stage_name(state.current) != stage) {
      problems->push_back("expected stage " + stage + ", at " + std::string(coach::stage_name(state.current)));
    }
    if (step.contains("submit")) {
      auto r = tasks.submit(state.session_id, step.at("submit").get<std::string>());
      const bool rejected = step.value("rejected", false);
      if (problems && r.outcome.accepted == rejected) problems->push_back("unexpected acceptance at " + stage);
      state = r.state;
    } else {
      state = tasks.advance(state.session_id).state;
    }
  }
  return state.session_id;
}

/// Provider that blocks inside complete() until released.
class GateProvider final : public coach::LlmProvider {
 public:
  coach::LlmResponse complete(const coach::PromptBundle& b, const coach::MemoryWindow&) override {
    std::unique_lock lock(mu_);
    ++entered_;
    cv_.notify_all();
    cv_.wait(lock, [&] { return open_; });
    return {coach::ScriptedProvider::default_response(b.stage, b.user_message), {}, 1};
  }
  void wait_entered(int n = 1) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return entered_ >= n; });
  }
  void open() {
    std::lock_guard lock(mu_);
    open_ = true;
    cv_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int entered_ = 0;
  bool open_ = false;
};

/// Provider that always fails with ProviderUnavailable.
class DownProvider final : public coach::LlmProvider {
 public:
  coach::LlmResponse complete(const coach::PromptBundle&, const coach::MemoryWindow&) override {
    throw coach::Error(coach::ErrorCode::ProviderUnavailable, "provider unavailable after 3 attempts");
  }
};

}  // namespace testing

#include <httplib.h>

namespace testing {

struct HttpRun {
  std::string task_id;
  nlohmann::json final_view;
  nlohmann::json messages;
  std::vector<std::string> problems;
};

/// Plays the walkthrough over real HTTP: register, login, create, then each
/// step, checking status codes and stage names on the way.
inline HttpRun play_walkthrough_http(const std::string& host, int port) {
  using nlohmann::json;
  HttpRun run;
  const auto doc = walkthrough();
  httplib::Client cli(host, port);
  cli.set_read_timeout(10, 0);
  auto post = [&](const std::string& path, const json& body, const std::string& token = {}) {
    httplib::Headers h;
    if (!token.empty()) h.emplace("Authorization", "Bearer " + token);
    return cli.Post(path, h, body.dump(), "application/json");
  };
  auto fail = [&](std::string what) { run.problems.push_back(std::move(what)); };

  const json creds{{"username", "walker"}, {"password", "long enough password"}};
  auto reg = post("/auth/register", creds);
  if (!reg || reg->status != 200) return fail("register failed"), run;
  auto login = post("/auth/login", creds);
  if (!login || login->status != 200) return fail("login failed"), run;
  const std::string token = json::parse(login->body).at("token");

  auto created = post("/tasks", {{"assignment_prompt", doc.at("assignment_prompt")}}, token);
  if (!created || created->status != 200) return fail("create failed"), run;
  json view = json::parse(created->body);
  run.task_id = view.at("task_id");
  const std::string base = "/tasks/" + run.task_id;

  for (const auto& step : doc.at("steps")) {
    const std::string stage = step.at("stage");
    if (view.at("stage").at("name") != stage) fail("expected " + stage + ", at " + view.at("stage").at("name").dump());
    if (step.contains("submit")) {
      auto r = post(base + "/submit", {{"input", step.at("submit")}}, token);
      if (!r) return fail("submit transport error at " + stage), run;
      const int want = step.value("rejected", false) ? 400 : 200;
      if (r->status != want) fail("submit at " + stage + " returned " + std::to_string(r->status));
      if (r->status == 200) view = json::parse(r->body).at("task");
    } else {
      auto r = post(base + "/advance", json::object(), token);
      if (!r || r->status != 200) return fail("advance failed at " + stage), run;
      view = json::parse(r->body);
    }
  }
  httplib::Headers h{{"Authorization", "Bearer " + token}};
  auto got = cli.Get(base, h);
  auto msgs = cli.Get(base + "/messages", h);
  if (!got || got->status != 200 || !msgs || msgs->status != 200) return fail("final reads failed"), run;
  run.final_view = json::parse(got->body);
  run.messages = json::parse(msgs->body);
  return run;
}

}  // namespace testing
