#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "coach/prompt_engine.hpp"
#include "coach/session.hpp"

namespace coach {

struct ProviderConfig {
  std::string base_url = "http://127.0.0.1:8080/v1";
  std::string api_key;
  std::string model = "gpt-4o-mini";
  double temperature = 0.7;
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
  std::size_t context_k = 8;

  /// Throws InvalidConfig.
  void validate() const;

  /// Reads COACH_PROVIDER_BASE_URL, COACH_PROVIDER_API_KEY, COACH_PROVIDER_MODEL,
  /// COACH_PROVIDER_TEMPERATURE, COACH_PROVIDER_TIMEOUT_SECONDS,
  /// COACH_PROVIDER_MAX_RETRIES and COACH_CONTEXT_K over the defaults.
  static ProviderConfig from_env();
};

struct LlmResponse {
  std::string content;
  std::chrono::milliseconds provider_latency{0};
  int attempts = 1;
};

// ---------------------------------------------------------------------------
// Short-term memory
// ---------------------------------------------------------------------------

/// Persisted message as seen by the context assembler.
struct HistoryMessage {
  Role role;
  Stage stage;
  std::string content;
};

struct Turn {
  std::string user;
  std::string assistant;
  bool operator==(const Turn&) const = default;
};

struct MemoryWindow {
  std::vector<LabeledText> pinned_artifacts;
  std::vector<Turn> recent_turns;
};

/// Pins the assignment (always) plus thesis and outline when present, and
/// keeps the last `k` user/assistant pairs recorded at the session's current
/// stage. A user message not immediately followed by an assistant reply at
/// the same stage forms no pair.
MemoryWindow assemble_context(const SessionState& session, const std::vector<HistoryMessage>& history,
                              std::size_t k);

// ---------------------------------------------------------------------------
// Wire codec
// ---------------------------------------------------------------------------

/// Chat-completions request: {"model", "messages": [{"role","content"}...],
/// "temperature"}. Messages are the system message, one system context block
/// (bundle context plus pinned artifacts not already in it), the recent turns
/// and finally the user message.
nlohmann::json encode_request(const PromptBundle& bundle, const MemoryWindow& window,
                              const ProviderConfig& config);

/// Content of the first choice. Unknown fields are ignored. Throws
/// MalformedResponse.
LlmResponse decode_response(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Providers
// ---------------------------------------------------------------------------

class LlmProvider {
 public:
  virtual ~LlmProvider() = default;
  virtual LlmResponse complete(const PromptBundle& bundle, const MemoryWindow& window) = 0;
};

struct HttpReply {
  int status = 0;
  std::string body;
};

/// Thrown by transports for connection-level failures (refused, reset, timed out).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  /// POSTs `body` to `{base_url}{path}` with a bearer token.
  virtual HttpReply post(const std::string& path, const std::string& body, const std::string& bearer) = 0;
};

/// cpp-httplib backed transport; http and https base URLs.
class HttpTransport final : public Transport {
 public:
  HttpTransport(std::string base_url, std::chrono::milliseconds timeout);
  HttpReply post(const std::string& path, const std::string& body, const std::string& bearer) override;

 private:
  std::string origin_;
  std::string prefix_;
  std::chrono::milliseconds timeout_;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline constexpr std::chrono::milliseconds kBackoffBase{1000};

/// Delay before retry number `retry` (1-based): base, 2*base, 4*base, ...
std::chrono::milliseconds backoff_delay(int retry);

/// Provider speaking the chat-completions protocol over a Transport.
/// Transport errors, 429 and 5xx are retried up to max_retries times with
/// exponential backoff; other statuses fail at once.
class ChatCompletionsProvider final : public LlmProvider {
 public:
  ChatCompletionsProvider(ProviderConfig config, std::shared_ptr<Transport> transport,
                          Sleeper sleep = nullptr);

  LlmResponse complete(const PromptBundle& bundle, const MemoryWindow& window) override;

  const ProviderConfig& config() const { return config_; }

 private:
  std::string redact(std::string text) const;

  ProviderConfig config_;
  std::shared_ptr<Transport> transport_;
  Sleeper sleep_;
};

std::uint64_t fnv1a64(std::string_view data);

/// Deterministic fixture-backed provider. Responses are keyed on
/// (stage, FNV-1a hash of the user message); unknown keys get a generated
/// response that satisfies the stage's output contract.
class ScriptedProvider final : public LlmProvider {
 public:
  ScriptedProvider() = default;

  void add(Stage stage, std::string_view user_message, std::string response);
  /// Fixture file: [{"stage", "input" | "input_hash", "response"}], or an
  /// object holding that array under "script".
  void load(const std::filesystem::path& file);

  LlmResponse complete(const PromptBundle& bundle, const MemoryWindow& window) override;

  std::size_t calls() const;

  /// Generated response used for unscripted inputs.
  static std::string default_response(Stage stage, std::string_view user_message);

 private:
  mutable std::mutex mu_;
  std::map<std::pair<Stage, std::uint64_t>, std::string> script_;
  std::size_t calls_ = 0;
};

}  // namespace coach
