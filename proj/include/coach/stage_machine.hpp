#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coach/error.hpp"
#include "coach/feedback.hpp"
#include "coach/prompt_engine.hpp"
#include "coach/session.hpp"

namespace coach {

/// Produces the feedback for an accepted submission. `state` already holds
/// the submission. May throw Error(ProviderUnavailable) or a feedback parse
/// error; either leaves the submission saved with feedback absent.
using FeedbackSource = std::function<FeedbackReport(const SessionState& state, std::string_view input)>;

struct SubmissionOutcome {
  bool accepted = false;
  ValidationResult validation;
  std::optional<FeedbackReport> feedback;
  Stage stage_after = Stage::PreWriting;
  /// Set when the submission was saved but feedback could not be produced.
  std::optional<Error> feedback_error;
};

struct SubmitResult {
  SessionState state;
  SubmissionOutcome outcome;
};

struct EssayResult {
  SessionState state;
  std::string essay;
};

/// Pure transitions over SessionState values. `now` stamps updated_at.
namespace stage_machine {

/// Throws EmptyAssignment when the prompt is blank.
SessionState new_session(std::string session_id, std::string user_id,
                         std::string_view assignment_prompt, Timestamp now);

/// Validates and records a submission for the current stage, then asks
/// `feedback` for a report. Never changes the current stage. Throws
/// SessionCompleted, or InputNotAccepted at stages that take no input.
/// A rejected input leaves the state untouched and `accepted` false.
SubmitResult submit(const SessionState& state, std::string_view input, const FeedbackSource& feedback,
                    Timestamp now);

/// Moves to the next stage. Throws SessionCompleted, or MissingSubmission
/// when the current stage requires a submission and has none. Advancing
/// from GrammarCheck marks the session completed.
SessionState advance(const SessionState& state, Timestamp now);

/// Joins introduction, body paragraphs and conclusion with blank lines and
/// records the result as the BodyWrapUp artifact. Throws WrongStage before
/// BodyWrapUp, MissingSection(detail = stage name) when the introduction or
/// body is absent.
EssayResult assemble_essay(const SessionState& state, Timestamp now);

/// At WordChoiceEvaluation or GrammarCheck, records the latest full essay
/// as the stage's artifact. Throws WrongStage elsewhere, MissingSection when
/// no essay exists.
EssayResult begin_analysis(const SessionState& state, Timestamp now);

}  // namespace stage_machine

/// One entry of a session's action log.
struct SessionAction {
  enum class Kind { Submit, Advance };
  Kind kind;
  std::string input;  // Submit only
  Timestamp at = 0;
};

/// Advance followed by the system steps that stage entry implies: essay
/// assembly on entering BodyWrapUp and essay capture on entering an
/// analysis stage. Returns the essay captured for analysis, if any.
struct AdvanceResult {
  SessionState state;
  std::optional<std::string> analysis_input;
};
AdvanceResult advance_with_entry(const SessionState& state, Timestamp now);

/// Rebuilds a session from its action log. Deterministic given `feedback`.
SessionState replay(std::string session_id, std::string user_id, std::string_view assignment_prompt,
                    Timestamp created_at, const std::vector<SessionAction>& actions,
                    const FeedbackSource& feedback);

}  // namespace coach
