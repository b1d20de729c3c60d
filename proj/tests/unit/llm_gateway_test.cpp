#include <doctest.h>

#include <httplib.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include "coach/stage_machine.hpp"
#include "support.hpp"

using namespace coach;
using nlohmann::json;
using testing::FakeTransport;

namespace {

struct RecordingSleeper {
  std::shared_ptr<std::vector<long long>> waits = std::make_shared<std::vector<long long>>();
  void operator()(std::chrono::milliseconds d) const { waits->push_back(d.count()); }
};

PromptBundle small_bundle() {
  PromptBundle b;
  b.stage = Stage::ThesisStatement;
  b.system_message = "Act as a writing coach.";
  b.user_message = "Schools should ban homework.";
  return b;
}

ProviderConfig config(int retries, std::string key = "sk-test") {
  ProviderConfig c;
  c.api_key = std::move(key);
  c.max_retries = retries;
  return c;
}

/// Captures everything logged through the default spdlog logger.
struct LogCapture {
  std::ostringstream out;
  std::shared_ptr<spdlog::logger> previous = spdlog::default_logger();
  LogCapture() {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(out);
    spdlog::set_default_logger(std::make_shared<spdlog::logger>("capture", sink));
  }
  ~LogCapture() { spdlog::set_default_logger(previous); }
};

}  // namespace

TEST_CASE("encode_request matches the golden documents") {
  auto fixtures = testing::encode_fixtures();
  REQUIRE(fixtures.size() == 5);
  for (const auto& fx : fixtures) {
    CAPTURE(fx.name);
    const json doc = encode_request(fx.bundle, fx.window, fx.config);
    CHECK(doc == fx.expected);
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"messages", "model", "temperature"});
    for (const auto& m : doc.at("messages")) CHECK(m.size() == 2);
  }
}

TEST_CASE("encode_request shape") {
  auto doc = encode_request(small_bundle(), {}, ProviderConfig{});
  CHECK(doc.at("messages").size() == 2);

  // Bounded by 3 + 2K for any window the assembler can produce.
  std::mt19937 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = stage_machine::new_session("s", "u", "prompt", 1);
    s.current = Stage::BodyParagraph;
    if (rng() % 2) s.artifacts[Stage::ThesisStatement].push("T");
    std::vector<HistoryMessage> history;
    const int n = static_cast<int>(rng() % 40);
    for (int i = 0; i < n; ++i) {
      const Stage st = rng() % 3 ? Stage::BodyParagraph : Stage::IntroductionParagraph;
      history.push_back({rng() % 2 ? Role::User : Role::Assistant, st, "m" + std::to_string(i)});
    }
    const std::size_t k = rng() % 10;
    auto window = assemble_context(s, history, k);
    PromptBundle b = small_bundle();
    b.context_messages.push_back({Role::System, "ASSIGNMENT:\nprompt"});
    auto enc = encode_request(b, window, ProviderConfig{});
    CHECK(enc.at("messages").size() <= 3 + 2 * k);
  }
}

TEST_CASE("decode_response") {
  CHECK(decode_response(json::parse(R"({"choices":[{"message":{"role":"assistant","content":"ok"}}]})")).content ==
        "ok");
  auto malformed = [](const char* text) {
    try {
      decode_response(json::parse(text));
    } catch (const Error& e) {
      return e.code() == ErrorCode::MalformedResponse;
    }
    return false;
  };
  CHECK(malformed(R"({"choices":[]})"));
  CHECK(malformed(R"({})"));
  CHECK(malformed(R"({"choices":[{"message":{"role":"assistant"}}]})"));
  CHECK(malformed(R"({"choices":[{"message":{"content":42}}]})"));
  CHECK(malformed(R"({"choices":[{"text":"legacy"}]})"));
  CHECK(malformed(R"([1,2])"));
  auto tolerant = decode_response(json::parse(
      R"({"id":"x","system_fingerprint":"fp","choices":[{"index":0,"logprobs":null,"finish_reason":"stop",
          "message":{"role":"assistant","content":"fine","refusal":null,"extra":{"a":1}}},
          {"message":{"content":"second"}}],"usage":{"prompt_tokens":1}})"));
  CHECK(tolerant.content == "fine");
}

TEST_CASE("decode of an echoed request round-trips the content") {
  for (const auto& fx : testing::encode_fixtures()) {
    auto req = encode_request(fx.bundle, fx.window, fx.config);
    json echo{{"choices", {{{"message", req.at("messages").back()}}}}};
    CHECK(decode_response(echo).content == fx.bundle.user_message);
  }
}

TEST_CASE("retry contract") {
  SUBCASE("two failures then success") {
    auto t = std::make_shared<FakeTransport>(
        std::vector<FakeTransport::Outcome>{{0, {}}, {503, "busy"}, {200, FakeTransport::completion("hello")}});
    RecordingSleeper sleeper;
    ChatCompletionsProvider p(config(2), t, sleeper);
    auto r = p.complete(small_bundle(), {});
    CHECK(r.content == "hello");
    CHECK(r.attempts == 3);
    CHECK(t->calls.size() == 3);
    CHECK(*sleeper.waits == std::vector<long long>{1000, 2000});
    CHECK(t->calls[0].path == "/chat/completions");
    CHECK(t->calls[0].bearer == "sk-test");
    CHECK(json::parse(t->calls[0].body) == encode_request(small_bundle(), {}, config(2)));
  }
  SUBCASE("always failing") {
    auto t = std::make_shared<FakeTransport>(std::vector<FakeTransport::Outcome>{{500, "x"}});
    RecordingSleeper sleeper;
    ChatCompletionsProvider p(config(2), t, sleeper);
    try {
      p.complete(small_bundle(), {});
      FAIL("expected ProviderUnavailable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::ProviderUnavailable);
    }
    CHECK(t->calls.size() == 3);
    CHECK(*sleeper.waits == std::vector<long long>{1000, 2000});
  }
  SUBCASE("429 is retried, 400 is not") {
    auto t = std::make_shared<FakeTransport>(
        std::vector<FakeTransport::Outcome>{{429, ""}, {200, FakeTransport::completion("x")}});
    ChatCompletionsProvider p(config(1), t, RecordingSleeper{});
    CHECK(p.complete(small_bundle(), {}).attempts == 2);

    auto t400 = std::make_shared<FakeTransport>(std::vector<FakeTransport::Outcome>{{400, "bad"}});
    ChatCompletionsProvider p400(config(5), t400, RecordingSleeper{});
    CHECK_THROWS_AS(p400.complete(small_bundle(), {}), Error);
    CHECK(t400->calls.size() == 1);
  }
  SUBCASE("malformed payload passes through without retry") {
    auto t = std::make_shared<FakeTransport>(std::vector<FakeTransport::Outcome>{{200, R"({"choices":[]})"}});
    ChatCompletionsProvider p(config(3), t, RecordingSleeper{});
    try {
      p.complete(small_bundle(), {});
      FAIL("expected MalformedResponse");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedResponse);
    }
    CHECK(t->calls.size() == 1);
  }
  SUBCASE("exponential schedule") {
    for (int retries = 0; retries <= 5; ++retries) {
      auto t = std::make_shared<FakeTransport>(std::vector<FakeTransport::Outcome>{{0, {}}});
      RecordingSleeper sleeper;
      ChatCompletionsProvider p(config(retries), t, sleeper);
      CHECK_THROWS(p.complete(small_bundle(), {}));
      CHECK(t->calls.size() == static_cast<std::size_t>(retries + 1));
      REQUIRE(sleeper.waits->size() == static_cast<std::size_t>(retries));
      for (int i = 0; i < retries; ++i) CHECK((*sleeper.waits)[i] == 1000LL << i);
    }
  }
}

TEST_CASE("api key never reaches logs or errors") {
  const std::string key = "sk-live-SECRET-7f3a9c";
  LogCapture capture;
  auto t = std::make_shared<FakeTransport>(std::vector<FakeTransport::Outcome>{{0, {}}},
                                           "connect failed for Bearer " + key);
  ChatCompletionsProvider p(config(2, key), t, RecordingSleeper{});
  std::string message;
  try {
    p.complete(small_bundle(), {});
  } catch (const Error& e) {
    message = std::string(e.what()) + e.detail();
  }
  spdlog::default_logger()->flush();
  CHECK_FALSE(message.empty());
  CHECK(message.find(key) == std::string::npos);
  CHECK(capture.out.str().find("retrying") != std::string::npos);
  CHECK(capture.out.str().find(key) == std::string::npos);
  // The key is sent where it belongs.
  CHECK(t->calls.at(0).bearer == key);
  CHECK(t->calls.at(0).body.find(key) == std::string::npos);
}

TEST_CASE("provider config") {
  CHECK_NOTHROW(ProviderConfig{}.validate());
  auto bad = [](auto mutate) {
    ProviderConfig c;
    mutate(c);
    try {
      c.validate();
    } catch (const Error& e) {
      return e.code() == ErrorCode::InvalidConfig;
    }
    return false;
  };
  CHECK(bad([](ProviderConfig& c) { c.temperature = 2.5; }));
  CHECK(bad([](ProviderConfig& c) { c.temperature = -0.1; }));
  CHECK(bad([](ProviderConfig& c) { c.timeout = std::chrono::milliseconds(0); }));
  CHECK(bad([](ProviderConfig& c) { c.max_retries = -1; }));
  CHECK(bad([](ProviderConfig& c) { c.base_url = "ftp://x"; }));

  setenv("COACH_PROVIDER_MODEL", "llama3", 1);
  setenv("COACH_PROVIDER_TEMPERATURE", "0.2", 1);
  setenv("COACH_PROVIDER_TIMEOUT_SECONDS", "5", 1);
  setenv("COACH_PROVIDER_MAX_RETRIES", "4", 1);
  setenv("COACH_CONTEXT_K", "3", 1);
  auto c = ProviderConfig::from_env();
  CHECK(c.model == "llama3");
  CHECK(c.temperature == doctest::Approx(0.2));
  CHECK(c.timeout == std::chrono::milliseconds(5000));
  CHECK(c.max_retries == 4);
  CHECK(c.context_k == 3);
  for (const char* v : {"COACH_PROVIDER_MODEL", "COACH_PROVIDER_TEMPERATURE", "COACH_PROVIDER_TIMEOUT_SECONDS",
                        "COACH_PROVIDER_MAX_RETRIES", "COACH_CONTEXT_K"}) {
    unsetenv(v);
  }
}

TEST_CASE("assemble_context") {
  auto s = stage_machine::new_session("s", "u", "Argue for or against homework bans", 1);
  SUBCASE("fresh session") {
    auto w = assemble_context(s, {}, 8);
    REQUIRE(w.pinned_artifacts.size() == 1);
    CHECK(w.pinned_artifacts[0] == LabeledText{"ASSIGNMENT", "Argue for or against homework bans"});
    CHECK(w.recent_turns.empty());
  }
  SUBCASE("window keeps the last K body pairs") {
    s.current = Stage::BodyParagraph;
    std::vector<HistoryMessage> h;
    h.push_back({Role::User, Stage::IntroductionParagraph, "intro"});
    h.push_back({Role::Assistant, Stage::IntroductionParagraph, "intro feedback"});
    for (int i = 0; i < 10; ++i) {
      h.push_back({Role::User, Stage::BodyParagraph, "p" + std::to_string(i)});
      h.push_back({Role::Assistant, Stage::BodyParagraph, "f" + std::to_string(i)});
    }
    auto w = assemble_context(s, h, 8);
    REQUIRE(w.recent_turns.size() == 8);
    CHECK(w.recent_turns.front() == Turn{"p2", "f2"});
    CHECK(w.recent_turns.back() == Turn{"p9", "f9"});
  }
  SUBCASE("conclusion pins thesis and outline") {
    s.current = Stage::ConclusionParagraph;
    s.artifacts[Stage::ThesisStatement].push("T1");
    s.artifacts[Stage::ThesisStatement].push("T2");
    s.artifacts[Stage::OutlineBuilding].push("O");
    auto w = assemble_context(s, {}, 8);
    REQUIRE(w.pinned_artifacts.size() == 3);
    CHECK(w.pinned_artifacts[1] == LabeledText{"THESIS", "T2"});
    CHECK(w.pinned_artifacts[2] == LabeledText{"OUTLINE", "O"});
  }
  SUBCASE("turns come only from the current stage") {
    s.current = Stage::ThesisStatement;
    std::vector<HistoryMessage> h = {
        {Role::User, Stage::PreWriting, "k"},        {Role::Assistant, Stage::ThesisStatement, "x"},
        {Role::User, Stage::ThesisStatement, "t1"},  {Role::Assistant, Stage::ThesisStatement, "f1"},
        {Role::System, Stage::ThesisStatement, "advance: ..."},
        {Role::User, Stage::ThesisStatement, "t2"},  {Role::User, Stage::ThesisStatement, "t3"},
        {Role::Assistant, Stage::ThesisStatement, "f3"},
    };
    auto w = assemble_context(s, h, 8);
    CHECK(w.recent_turns == std::vector<Turn>{{"t1", "f1"}, {"t3", "f3"}});
  }
}

TEST_CASE("scripted provider") {
  ScriptedProvider p;
  p.add(Stage::ThesisStatement, "Schools should ban homework.", "scripted reply");
  auto r = p.complete(small_bundle(), {});
  CHECK(r.content == "scripted reply");
  CHECK(r.attempts == 1);

  PromptBundle other = small_bundle();
  other.stage = Stage::OutlineBuilding;
  auto a = p.complete(other, {});
  auto b = p.complete(other, {});
  CHECK(a.content == b.content);
  CHECK(a.content != "scripted reply");
  CHECK(p.calls() == 3);

  // The generated fallback satisfies every stage's output contract.
  for (Stage s : kAllStages) {
    if (stage_spec(s).criteria.empty()) continue;
    const std::string raw = ScriptedProvider::default_response(s, "Essay text here.");
    auto report = parse_feedback(raw, stage_spec(s));
    CHECK(report.sections.size() == stage_spec(s).criteria.size());
    if (is_analysis_stage(s)) {
      auto claims = extract_claims(raw);
      REQUIRE(claims.claims.size() == 1);
      CHECK(claims.claims[0].quote == "Essay");
    }
  }

  ScriptedProvider loaded;
  loaded.load(testing::data_dir() / "fixtures" / "walkthrough.json");
  auto fixture = testing::read_json(testing::data_dir() / "fixtures" / "walkthrough.json");
  const auto& entry = fixture.at("script").at(0);
  PromptBundle fb = small_bundle();
  fb.stage = stage_from_name(entry.at("stage").get<std::string>()).value();
  fb.user_message = entry.at("input");
  CHECK(loaded.complete(fb, {}).content == entry.at("response").get<std::string>());
}

TEST_CASE("HTTP transport speaks to a loopback server") {
  httplib::Server server;
  std::string seen_auth, seen_path, seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    seen_path = req.path;
    seen_body = req.body;
    res.set_content(FakeTransport::completion("from server"), "application/json");
  });
  server.Post("/slow/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    res.set_content("{}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ProviderConfig c = config(0, "sk-loop");
  c.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  ChatCompletionsProvider p(c, std::make_shared<HttpTransport>(c.base_url, c.timeout));
  auto r = p.complete(small_bundle(), {});
  CHECK(r.content == "from server");
  CHECK(seen_auth == "Bearer sk-loop");
  CHECK(seen_path == "/v1/chat/completions");
  CHECK(json::parse(seen_body).at("model") == c.model);

  HttpTransport slow("http://127.0.0.1:" + std::to_string(port) + "/slow", std::chrono::milliseconds(150));
  CHECK_THROWS_AS(slow.post("/chat/completions", "{}", ""), TransportError);

  server.stop();
  th.join();
}
