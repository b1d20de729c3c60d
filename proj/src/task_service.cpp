#include "coach/task_service.hpp"

#include <spdlog/spdlog.h>

namespace coach {

TaskService::Lease::Lease(TaskService& svc, std::string task_id) : svc_(svc), task_id_(std::move(task_id)) {
  std::lock_guard lock(svc_.lease_mu_);
  if (!svc_.in_flight_.insert(task_id_).second) {
    throw Error(ErrorCode::Busy, "another request for this task is still running");
  }
}

TaskService::Lease::~Lease() {
  std::lock_guard lock(svc_.lease_mu_);
  svc_.in_flight_.erase(task_id_);
}

TaskService::TaskService(Store& store, const TemplateLibrary& templates, LlmProvider& provider,
                         const ResourceEvaluator& resources, std::size_t context_k, Clock clock)
    : store_(store),
      templates_(templates),
      provider_(provider),
      resources_(resources),
      context_k_(context_k),
      clock_(std::move(clock)) {}

SessionState TaskService::create_task(const std::string& user_id, std::string_view assignment_prompt) {
  auto state = stage_machine::new_session(random_id(), user_id, assignment_prompt, clock_());
  store_.create_conversation(state);
  return state;
}

SessionState TaskService::load(const std::string& task_id) { return store_.load_snapshot(task_id); }

void TaskService::check_owner(const std::string& task_id, const std::string& user_id) {
  if (store_.conversation_owner(task_id) != user_id) {
    throw Error(ErrorCode::Forbidden, "this task belongs to another writer");
  }
}

StageFeedback TaskService::interpret(Stage stage, std::string analyzed, std::string raw) const {
  StageFeedback fb;
  fb.stage = stage;
  fb.analyzed_text = std::move(analyzed);
  try {
    fb.report = parse_feedback(raw, stage_spec(stage));
  } catch (const Error& e) {
    fb.error = e;
  }
  auto claims = extract_claims(raw);
  fb.skipped_claims = claims.skipped;
  if (!fb.analyzed_text.empty()) fb.located = locate(fb.analyzed_text, claims.claims);
  fb.raw = std::move(raw);
  return fb;
}

StageFeedback TaskService::run_feedback(const SessionState& state, Stage stage, std::string_view input) {
  std::vector<HistoryMessage> history;
  for (const auto& m : store_.load_messages(state.session_id, stage)) {
    history.push_back({m.role, m.stage, m.content});
  }
  const MemoryWindow window = assemble_context(state, history, context_k_);
  const PromptBundle bundle = render(templates_.template_for(stage), state, input);
  try {
    auto response = provider_.complete(bundle, window);
    return interpret(stage, std::string(input), std::move(response.content));
  } catch (const Error& e) {
    spdlog::warn("feedback for task {} at {} failed: {}", state.session_id, stage_name(stage), e.what());
    StageFeedback fb;
    fb.stage = stage;
    fb.analyzed_text = std::string(input);
    fb.error = e;
    return fb;
  }
}

SubmitReply TaskService::submit(const std::string& task_id, std::string_view input) {
  Lease lease(*this, task_id);
  const Timestamp now = clock_();
  const SessionState before = store_.load_snapshot(task_id);

  std::optional<StageFeedback> feedback;
  FeedbackSource source = [&](const SessionState& state, std::string_view text) -> FeedbackReport {
    feedback = run_feedback(state, state.current, text);
    if (feedback->error) throw *feedback->error;
    return *feedback->report;
  };
  auto result = stage_machine::submit(before, input, source, now);

  SubmitReply reply{result.state, std::move(result.outcome), std::move(feedback)};
  if (!reply.outcome.accepted) return reply;

  std::vector<MessageRecord> log;
  log.push_back({{}, task_id, Role::User, before.current, std::string(input), now, 0});
  if (reply.feedback && reply.feedback->raw) {
    log.push_back({{}, task_id, Role::Assistant, before.current, *reply.feedback->raw, now, 0});
  }
  store_.commit_interaction(task_id, std::move(log), reply.state);
  return reply;
}

std::string TaskService::advance_marker(Stage from, const SessionState& after) {
  return "advance: " + std::string(stage_name(from)) + " -> " +
         (after.completed ? std::string("completed") : std::string(stage_name(after.current)));
}

AdvanceReply TaskService::advance(const std::string& task_id) {
  Lease lease(*this, task_id);
  const Timestamp now = clock_();
  const SessionState before = store_.load_snapshot(task_id);
  auto result = advance_with_entry(before, now);

  AdvanceReply reply{std::move(result.state), std::nullopt};
  std::vector<MessageRecord> log;
  log.push_back({{}, task_id, Role::System, before.current, advance_marker(before.current, reply.state), now, 0});
  if (result.analysis_input) {
    const Stage stage = reply.state.current;
    reply.analysis = run_feedback(reply.state, stage, *result.analysis_input);
    log.push_back({{}, task_id, Role::User, stage, *result.analysis_input, now, 0});
    if (reply.analysis->raw) {
      log.push_back({{}, task_id, Role::Assistant, stage, *reply.analysis->raw, now, 0});
    }
  }
  store_.commit_interaction(task_id, std::move(log), reply.state);
  return reply;
}

std::vector<MessageRecord> TaskService::messages(const std::string& task_id, std::optional<Stage> stage) {
  return store_.load_messages(task_id, stage);
}

std::optional<StageFeedback> TaskService::latest_analysis(const SessionState& state) {
  if (!is_analysis_stage(state.current)) return std::nullopt;
  auto essay = state.latest(state.current);
  if (!essay) return std::nullopt;
  const auto log = store_.load_messages(state.session_id, state.current);
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (it->role == Role::Assistant) return interpret(state.current, *essay, it->content);
  }
  return std::nullopt;
}

std::vector<ReliabilityAssessment> TaskService::evaluate_resources(const std::vector<std::string>& urls,
                                                                   bool use_llm) {
  return resources_.evaluate_all(urls, use_llm ? &provider_ : nullptr);
}

SessionState TaskService::rebuild_from_log(const std::string& task_id) {
  const SessionState stored = store_.load_snapshot(task_id);
  std::vector<SessionAction> actions;
  for (const auto& m : store_.load_messages(task_id)) {
    if (m.role == Role::System && m.content.rfind("advance:", 0) == 0) {
      actions.push_back({SessionAction::Kind::Advance, {}, m.created_at});
    } else if (m.role == Role::User && stage_spec(m.stage).input_kind != InputKind::NoneRequired) {
      actions.push_back({SessionAction::Kind::Submit, m.content, m.created_at});
    }
  }
  return replay(stored.session_id, stored.user_id, stored.assignment_prompt, stored.created_at, actions,
                nullptr);
}

}  // namespace coach
