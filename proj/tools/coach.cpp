// Command line entry point: serve the API, rate URLs, inspect prompts.

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <csignal>
#include <fstream>
#include <iostream>

#include "coach/api_json.hpp"
#include "coach/api_service.hpp"
#include "coach/llm_gateway.hpp"
#include "coach/stage_machine.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Paths {
  fs::path data = COACH_DATA_DIR;

  fs::path templates() const { return data / "templates"; }
  fs::path migrations() const { return data / "migrations"; }
  fs::path suffixes() const { return data / "public_suffix_list.dat"; }
  fs::path allowlist() const { return data / "allowlist.txt"; }
  fs::path openapi() const { return data / "openapi.json"; }
};

coach::ResourceEvaluator make_evaluator(const Paths& p) {
  return coach::ResourceEvaluator(coach::PublicSuffixList::load(p.suffixes()),
                                  coach::DomainAllowlist::load(p.allowlist()));
}

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  return json::parse(in);
}

coach::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int serve(const Paths& paths, const std::string& host, int port, const std::string& db,
          const std::vector<std::string>& cors, const std::string& script) {
  auto templates = coach::TemplateLibrary::load(paths.templates());
  auto evaluator = make_evaluator(paths);
  auto store = coach::open_store(db, paths.migrations());

  std::unique_ptr<coach::LlmProvider> provider;
  coach::ProviderConfig config = coach::ProviderConfig::from_env();
  if (!script.empty()) {
    auto scripted = std::make_unique<coach::ScriptedProvider>();
    scripted->load(script);
    provider = std::move(scripted);
    spdlog::info("using scripted responses from {}", script);
  } else {
    config.validate();
    auto transport = std::make_shared<coach::HttpTransport>(config.base_url, config.timeout);
    provider = std::make_unique<coach::ChatCompletionsProvider>(config, transport);
    spdlog::info("provider {} model {}", config.base_url, config.model);
  }

  coach::TaskService tasks(*store, templates, *provider, evaluator, config.context_k);
  coach::ApiConfig api_config;
  api_config.cors_origins = cors;
  api_config.description = read_json(paths.openapi());
  coach::ApiService api(tasks, *store, api_config);
  coach::HttpServer server(api);

  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  spdlog::info("listening on {}:{}", host, port);
  const bool ok = server.listen(host, port);
  g_server = nullptr;
  if (!ok) {
    spdlog::error("could not listen on {}:{}", host, port);
    return 1;
  }
  return 0;
}

int eval_urls(const Paths& paths, const std::vector<std::string>& urls) {
  auto evaluator = make_evaluator(paths);
  json out = json::array();
  for (const auto& a : evaluator.evaluate_all(urls, nullptr)) out.push_back(coach::wire::to_json(a));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int render_prompt(const Paths& paths, const std::string& stage_id, const std::string& assignment,
                  const std::string& input, bool wire) {
  auto stage = coach::stage_from_name(stage_id);
  if (!stage) {
    std::cerr << "unknown stage '" << stage_id << "'\n";
    return 2;
  }
  auto templates = coach::TemplateLibrary::load(paths.templates());
  // A session positioned at the stage with no artifacts beyond the prompt.
  coach::SessionState state = coach::stage_machine::new_session("preview", "preview", assignment, 0);
  state.current = *stage;
  auto bundle = coach::render(templates.template_for(*stage), state, input);
  json out;
  if (wire) {
    coach::MemoryWindow window = coach::assemble_context(state, {}, 0);
    out = coach::encode_request(bundle, window, coach::ProviderConfig{});
  } else {
    json context = json::array();
    for (const auto& m : bundle.context_messages) {
      context.push_back({{"role", coach::role_name(m.role)}, {"content", m.content}});
    }
    out = {{"stage", coach::stage_name(bundle.stage)},
           {"system_message", bundle.system_message},
           {"context_messages", context},
           {"user_message", bundle.user_message}};
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int check_templates(const Paths& paths) {
  auto templates = coach::TemplateLibrary::load(paths.templates());
  for (coach::Stage s : coach::kAllStages) {
    const auto& t = templates.template_for(s);
    std::cout << coach::stage_name(s) << " v" << t.version << " ok\n";
  }
  return 0;
}

int purge(const Paths& paths, const std::string& db, int days) {
  auto store = coach::open_store(db, paths.migrations());
  const auto now = std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  const coach::Timestamp cutoff = now - static_cast<coach::Timestamp>(days) * 24 * 60 * 60 * 1000;
  std::cout << store->purge_messages_before(cutoff) << " messages removed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Staged academic writing coach"};
  app.require_subcommand(1);
  Paths paths;
  app.add_option("--data-dir", paths.data, "Directory with templates, migrations and domain lists")
      ->check(CLI::ExistingDirectory);

  std::string host = "127.0.0.1", db = "sqlite:coach.db", script;
  int port = 8000;
  std::vector<std::string> cors;
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--db", db, "memory: or sqlite:<path>");
  serve_cmd->add_option("--cors-origin", cors, "Origin allowed to call the API (repeatable)");
  serve_cmd->add_option("--scripted", script, "Answer from a scripted response file instead of a model");

  std::vector<std::string> urls;
  auto* eval_cmd = app.add_subcommand("eval-urls", "Print reliability tiers for URLs");
  eval_cmd->add_option("urls", urls)->required();

  std::string stage, assignment = "Write an essay.", input;
  bool wire = false;
  auto* render_cmd = app.add_subcommand("render-prompt", "Show the prompt sent for a stage");
  render_cmd->add_option("--stage", stage)->required();
  render_cmd->add_option("--assignment", assignment);
  render_cmd->add_option("--input", input);
  render_cmd->add_flag("--wire", wire, "Print the encoded chat-completions request");

  auto* check_cmd = app.add_subcommand("check-templates", "Load and validate every stage template");

  // Messages are kept until removed here; snapshots are never purged.
  int days = 0;
  auto* purge_cmd = app.add_subcommand("purge", "Delete logged messages older than a number of days");
  purge_cmd->add_option("--db", db, "memory: or sqlite:<path>");
  purge_cmd->add_option("--older-than-days", days)->required()->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*serve_cmd) return serve(paths, host, port, db, cors, script);
    if (*eval_cmd) return eval_urls(paths, urls);
    if (*render_cmd) return render_prompt(paths, stage, assignment, input, wire);
    if (*check_cmd) return check_templates(paths);
    if (*purge_cmd) return purge(paths, db, days);
  } catch (const coach::Error& e) {
    std::cerr << coach::to_string(e.code()) << ": " << e.what();
    if (!e.detail().empty()) std::cerr << " (" << e.detail() << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
