#pragma once

#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coach/feedback.hpp"
#include "coach/llm_gateway.hpp"
#include "coach/persistence.hpp"
#include "coach/prompt_engine.hpp"
#include "coach/resource_eval.hpp"
#include "coach/stage_machine.hpp"

namespace coach {

/// Model feedback on one piece of writing, with highlights located in it.
struct StageFeedback {
  Stage stage = Stage::PreWriting;
  std::string analyzed_text;
  std::optional<std::string> raw;
  std::optional<FeedbackReport> report;
  LocateResult located;
  std::size_t skipped_claims = 0;
  std::optional<Error> error;
};

struct SubmitReply {
  SessionState state;
  SubmissionOutcome outcome;
  std::optional<StageFeedback> feedback;  // set when the input was accepted
};

struct AdvanceReply {
  SessionState state;
  std::optional<StageFeedback> analysis;  // set on entering an analysis stage
};

/// Drives writing tasks: loads the stored session, applies a stage-machine
/// transition, runs the feedback pipeline and persists the messages and the
/// new snapshot in one commit. At most one mutating call per task runs at a
/// time; a concurrent one fails with Busy.
class TaskService {
 public:
  TaskService(Store& store, const TemplateLibrary& templates, LlmProvider& provider,
              const ResourceEvaluator& resources, std::size_t context_k = 8, Clock clock = system_now);

  SessionState create_task(const std::string& user_id, std::string_view assignment_prompt);
  SessionState load(const std::string& task_id);
  /// Throws NotFound / Forbidden.
  void check_owner(const std::string& task_id, const std::string& user_id);

  SubmitReply submit(const std::string& task_id, std::string_view input);
  AdvanceReply advance(const std::string& task_id);

  std::vector<MessageRecord> messages(const std::string& task_id, std::optional<Stage> stage = std::nullopt);

  /// Feedback stored for the current stage's latest analysis, if any.
  std::optional<StageFeedback> latest_analysis(const SessionState& state);

  std::vector<ReliabilityAssessment> evaluate_resources(const std::vector<std::string>& urls, bool use_llm);

  /// Rebuilds the session from its persisted message log.
  SessionState rebuild_from_log(const std::string& task_id);

  /// Content of the system message logged for an advance out of `from`.
  static std::string advance_marker(Stage from, const SessionState& after);

 private:
  class Lease {
   public:
    Lease(TaskService& svc, std::string task_id);
    ~Lease();
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;

   private:
    TaskService& svc_;
    std::string task_id_;
  };

  StageFeedback run_feedback(const SessionState& state, Stage stage, std::string_view input);
  StageFeedback interpret(Stage stage, std::string analyzed, std::string raw) const;

  Store& store_;
  const TemplateLibrary& templates_;
  LlmProvider& provider_;
  const ResourceEvaluator& resources_;
  std::size_t context_k_;
  Clock clock_;

  std::mutex lease_mu_;
  std::set<std::string> in_flight_;
};

}  // namespace coach
