#include "coach/llm_gateway.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "coach/error.hpp"
#include "coach/feedback.hpp"

namespace coach {

namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

template <typename T>
T env_number(const char* name, T fallback) {
  auto v = env(name);
  if (!v) return fallback;
  std::istringstream in(*v);
  T out{};
  if (!(in >> out)) throw Error(ErrorCode::InvalidConfig, std::string(name) + " is not a number");
  return out;
}

bool has_section(std::string_view block, std::string_view label) {
  const std::string header = std::string(label) + ":";
  std::size_t pos = 0;
  while (pos <= block.size()) {
    auto nl = block.find('\n', pos);
    if (nl == std::string_view::npos) nl = block.size();
    if (block.substr(pos, nl - pos) == header) return true;
    pos = nl + 1;
  }
  return false;
}

nlohmann::json message(std::string_view role, std::string_view content) {
  return {{"role", role}, {"content", content}};
}

}  // namespace

void ProviderConfig::validate() const {
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw Error(ErrorCode::InvalidConfig, "provider base URL must be http(s)");
  }
  if (model.empty()) throw Error(ErrorCode::InvalidConfig, "provider model is empty");
  if (!(temperature >= 0.0 && temperature <= 2.0)) {
    throw Error(ErrorCode::InvalidConfig, "temperature must lie in [0, 2]");
  }
  if (timeout.count() <= 0) throw Error(ErrorCode::InvalidConfig, "timeout must be positive");
  if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be non-negative");
}

ProviderConfig ProviderConfig::from_env() {
  ProviderConfig c;
  if (auto v = env("COACH_PROVIDER_BASE_URL")) c.base_url = *v;
  if (auto v = env("COACH_PROVIDER_API_KEY")) c.api_key = *v;
  if (auto v = env("COACH_PROVIDER_MODEL")) c.model = *v;
  c.temperature = env_number("COACH_PROVIDER_TEMPERATURE", c.temperature);
  const double seconds = env_number("COACH_PROVIDER_TIMEOUT_SECONDS", c.timeout.count() / 1000.0);
  c.timeout = std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
  c.max_retries = env_number("COACH_PROVIDER_MAX_RETRIES", c.max_retries);
  c.context_k = env_number("COACH_CONTEXT_K", c.context_k);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

MemoryWindow assemble_context(const SessionState& session, const std::vector<HistoryMessage>& history,
                              std::size_t k) {
  MemoryWindow window;
  window.pinned_artifacts.push_back(
      {std::string(slot_label(ContextSlot::AssignmentPrompt)), session.assignment_prompt});
  if (auto thesis = session.latest(Stage::ThesisStatement)) {
    window.pinned_artifacts.push_back({std::string(slot_label(ContextSlot::Thesis)), *thesis});
  }
  if (auto outline = session.latest(Stage::OutlineBuilding)) {
    window.pinned_artifacts.push_back({std::string(slot_label(ContextSlot::Outline)), *outline});
  }

  std::vector<Turn> turns;
  for (std::size_t i = 0; i + 1 < history.size(); ++i) {
    const auto& u = history[i];
    const auto& a = history[i + 1];
    if (u.role == Role::User && a.role == Role::Assistant && u.stage == session.current &&
        a.stage == session.current) {
      turns.push_back({u.content, a.content});
      ++i;
    }
  }
  const std::size_t keep = std::min(k, turns.size());
  window.recent_turns.assign(turns.end() - static_cast<std::ptrdiff_t>(keep), turns.end());
  return window;
}

nlohmann::json encode_request(const PromptBundle& bundle, const MemoryWindow& window,
                              const ProviderConfig& config) {
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back(message("system", bundle.system_message));

  std::string block;
  for (const auto& m : bundle.context_messages) {
    if (!block.empty()) block += "\n\n";
    block += m.content;
  }
  std::vector<LabeledText> extra;
  for (const auto& pinned : window.pinned_artifacts) {
    if (!has_section(block, pinned.label)) extra.push_back(pinned);
  }
  if (!extra.empty()) {
    if (!block.empty()) block += "\n\n";
    block += format_sections(extra);
  }
  if (!block.empty()) messages.push_back(message("system", block));

  for (const auto& t : window.recent_turns) {
    messages.push_back(message("user", t.user));
    messages.push_back(message("assistant", t.assistant));
  }
  messages.push_back(message("user", bundle.user_message));
  return {{"model", config.model}, {"messages", std::move(messages)}, {"temperature", config.temperature}};
}

LlmResponse decode_response(const nlohmann::json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::MalformedResponse, "response is not a JSON object");
  auto choices = doc.find("choices");
  if (choices == doc.end() || !choices->is_array() || choices->empty()) {
    throw Error(ErrorCode::MalformedResponse, "response has no choices");
  }
  const auto& first = choices->front();
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object()) {
    throw Error(ErrorCode::MalformedResponse, "first choice has no message");
  }
  const auto& msg = first["message"];
  auto content = msg.find("content");
  if (content == msg.end()) throw Error(ErrorCode::MalformedResponse, "message has no content");
  if (!content->is_string()) throw Error(ErrorCode::MalformedResponse, "message content is not text");
  LlmResponse r;
  r.content = content->get<std::string>();
  return r;
}

// ---------------------------------------------------------------------------

HttpTransport::HttpTransport(std::string base_url, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  const auto scheme_end = base_url.find("://");
  const auto path_start =
      scheme_end == std::string::npos ? std::string::npos : base_url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) {
    origin_ = std::move(base_url);
  } else {
    origin_ = base_url.substr(0, path_start);
    prefix_ = base_url.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

HttpReply HttpTransport::post(const std::string& path, const std::string& body, const std::string& bearer) {
  httplib::Client client(origin_);
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  httplib::Headers headers;
  if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
  auto res = client.Post(prefix_ + path, headers, body, "application/json");
  if (!res) throw TransportError("transport failure: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

std::chrono::milliseconds backoff_delay(int retry) {
  return kBackoffBase * (1LL << std::max(0, retry - 1));
}

ChatCompletionsProvider::ChatCompletionsProvider(ProviderConfig config, std::shared_ptr<Transport> transport,
                                                 Sleeper sleep)
    : config_(std::move(config)), transport_(std::move(transport)), sleep_(std::move(sleep)) {
  config_.validate();
  if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string ChatCompletionsProvider::redact(std::string text) const {
  if (config_.api_key.empty()) return text;
  for (auto pos = text.find(config_.api_key); pos != std::string::npos;
       pos = text.find(config_.api_key, pos)) {
    text.replace(pos, config_.api_key.size(), "[redacted]");
  }
  return text;
}

LlmResponse ChatCompletionsProvider::complete(const PromptBundle& bundle, const MemoryWindow& window) {
  const std::string body = encode_request(bundle, window, config_).dump();
  const auto started = std::chrono::steady_clock::now();
  std::string last_failure;
  for (int attempt = 1; attempt <= config_.max_retries + 1; ++attempt) {
    if (attempt > 1) {
      const auto delay = backoff_delay(attempt - 1);
      spdlog::warn("provider attempt {} failed ({}); retrying in {} ms", attempt - 1, last_failure,
                   delay.count());
      sleep_(delay);
    }
    HttpReply reply;
    try {
      reply = transport_->post("/chat/completions", body, config_.api_key);
    } catch (const TransportError& e) {
      last_failure = redact(e.what());
      continue;
    }
    if (reply.status == 429 || reply.status >= 500) {
      last_failure = "HTTP " + std::to_string(reply.status);
      continue;
    }
    if (reply.status < 200 || reply.status >= 300) {
      throw Error(ErrorCode::ProviderUnavailable,
                  "provider rejected the request with HTTP " + std::to_string(reply.status));
    }
    auto doc = nlohmann::json::parse(reply.body, nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::MalformedResponse, "provider response is not JSON");
    LlmResponse r = decode_response(doc);
    r.attempts = attempt;
    r.provider_latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);
    return r;
  }
  throw Error(ErrorCode::ProviderUnavailable,
              "language model unavailable after " + std::to_string(config_.max_retries + 1) +
                  " attempts (" + last_failure + ")");
}

// ---------------------------------------------------------------------------

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void ScriptedProvider::add(Stage stage, std::string_view user_message, std::string response) {
  std::lock_guard lock(mu_);
  script_[{stage, fnv1a64(user_message)}] = std::move(response);
}

void ScriptedProvider::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  auto doc = nlohmann::json::parse(in, nullptr, false);
  // A bare array, or a walkthrough fixture carrying its script under "script".
  if (doc.is_object() && doc.contains("script")) doc = doc.at("script");
  if (doc.is_discarded() || !doc.is_array()) {
    throw Error(ErrorCode::InvalidConfig, "scripted fixture file holds no response array", file.string());
  }
  std::lock_guard lock(mu_);
  for (const auto& entry : doc) {
    auto stage = stage_from_name(entry.at("stage").get<std::string>());
    if (!stage) throw Error(ErrorCode::InvalidConfig, "fixture names an unknown stage");
    const std::uint64_t key = entry.contains("input")
                                  ? fnv1a64(entry.at("input").get<std::string>())
                                  : std::stoull(entry.at("input_hash").get<std::string>(), nullptr, 16);
    script_[{*stage, key}] = entry.at("response").get<std::string>();
  }
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard lock(mu_);
  return calls_;
}

std::string ScriptedProvider::default_response(Stage stage, std::string_view user_message) {
  const auto& spec = stage_spec(stage);
  const std::uint64_t h = fnv1a64(user_message);
  std::vector<FeedbackSection> sections;
  for (const auto& c : spec.criteria) {
    sections.push_back({c, "Your work shows reasonable " + c + ". Review it once more against the "
                           "assignment and decide whether it says what you intend. (ref " +
                               std::to_string(h % 1000) + ")"});
  }
  if (is_analysis_stage(stage)) {
    std::istringstream in{std::string(user_message)};
    std::string first;
    in >> first;
    if (!first.empty()) {
      AnnotationClaim claim{first,
                            stage == Stage::GrammarCheck ? AnnotationCategory::Grammar
                                                         : AnnotationCategory::WordChoice,
                            "Check this word", std::nullopt};
      sections.back().body += "\n\n```annotations\n" + format_claim_line(claim) + "\n```";
    }
  }
  return render_feedback(sections, Verdict::Ready);
}

LlmResponse ScriptedProvider::complete(const PromptBundle& bundle, const MemoryWindow&) {
  std::string content;
  {
    std::lock_guard lock(mu_);
    ++calls_;
    auto it = script_.find({bundle.stage, fnv1a64(bundle.user_message)});
    if (it != script_.end()) content = it->second;
  }
  if (content.empty()) content = default_response(bundle.stage, bundle.user_message);
  LlmResponse r;
  r.content = std::move(content);
  return r;
}

}  // namespace coach
