#include "coach/stage_machine.hpp"

namespace coach {
namespace stage_machine {

namespace {

void require_open(const SessionState& state) {
  if (state.completed) throw Error(ErrorCode::SessionCompleted, "the writing task is already complete");
}

void touch(SessionState& s, Timestamp now) { s.updated_at = std::max(s.updated_at, now); }

}  // namespace

SessionState new_session(std::string session_id, std::string user_id,
                         std::string_view assignment_prompt, Timestamp now) {
  if (!validate_input(assignment_prompt, StageSpec{Stage::PreWriting, InputKind::FreeText, 1, true, {}})
           .valid) {
    throw Error(ErrorCode::EmptyAssignment, "please enter your assignment prompt");
  }
  SessionState s;
  s.session_id = std::move(session_id);
  s.user_id = std::move(user_id);
  s.assignment_prompt = std::string(assignment_prompt);
  s.current = first_stage();
  s.created_at = now;
  s.updated_at = now;
  return s;
}

SubmitResult submit(const SessionState& state, std::string_view input, const FeedbackSource& feedback,
                    Timestamp now) {
  require_open(state);
  const StageSpec& spec = stage_spec(state.current);
  if (spec.input_kind == InputKind::NoneRequired) {
    throw Error(ErrorCode::InputNotAccepted,
                std::string(stage_display_name(state.current)) + " does not take written input");
  }

  SubmitResult result{state, {}};
  result.outcome.stage_after = state.current;
  result.outcome.validation = validate_input(input, spec);
  if (!result.outcome.validation.valid) return result;

  result.outcome.accepted = true;
  result.state.artifacts[state.current].push(std::string(input));
  touch(result.state, now);
  if (feedback) {
    try {
      result.outcome.feedback = feedback(result.state, input);
    } catch (const Error& e) {
      result.outcome.feedback_error = e;
    }
  }
  return result;
}

SessionState advance(const SessionState& state, Timestamp now) {
  require_open(state);
  const StageSpec& spec = stage_spec(state.current);
  const ArtifactSlot* slot = state.slot(state.current);
  if (spec.requires_submission_to_advance && (!slot || slot->empty())) {
    throw Error(ErrorCode::MissingSubmission,
                "submit your " + std::string(stage_display_name(state.current)) + " before moving on",
                std::string(stage_name(state.current)));
  }
  SessionState next = state;
  if (state.current == last_stage()) {
    next.completed = true;
  } else {
    next.current = *stage_from_ordinal(ordinal(state.current) + 1);
  }
  touch(next, now);
  return next;
}

EssayResult assemble_essay(const SessionState& state, Timestamp now) {
  if (ordinal(state.current) < ordinal(Stage::BodyWrapUp)) {
    throw Error(ErrorCode::WrongStage, "the essay can only be assembled once the body is written");
  }
  auto intro = state.latest(Stage::IntroductionParagraph);
  if (!intro) {
    throw Error(ErrorCode::MissingSection, "the introduction paragraph is missing",
                std::string(stage_name(Stage::IntroductionParagraph)));
  }
  const ArtifactSlot* body = state.slot(Stage::BodyParagraph);
  if (!body || body->empty()) {
    throw Error(ErrorCode::MissingSection, "at least one body paragraph is required",
                std::string(stage_name(Stage::BodyParagraph)));
  }
  std::vector<std::string> parts{*intro};
  for (auto& p : body->submissions()) parts.push_back(std::move(p));
  if (auto conclusion = state.latest(Stage::ConclusionParagraph)) parts.push_back(*conclusion);

  std::string essay;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) essay += "\n\n";
    essay += parts[i];
  }
  EssayResult out{state, essay};
  out.state.artifacts[Stage::BodyWrapUp].push(essay);
  touch(out.state, now);
  return out;
}

EssayResult begin_analysis(const SessionState& state, Timestamp now) {
  require_open(state);
  if (!is_analysis_stage(state.current)) {
    throw Error(ErrorCode::WrongStage, "analysis runs only at the word choice and grammar stages");
  }
  auto essay = latest_essay(state);
  if (!essay) {
    throw Error(ErrorCode::MissingSection, "no essay has been assembled yet",
                std::string(stage_name(Stage::BodyWrapUp)));
  }
  EssayResult out{state, *essay};
  out.state.artifacts[state.current].push(*essay);
  touch(out.state, now);
  return out;
}

}  // namespace stage_machine

AdvanceResult advance_with_entry(const SessionState& state, Timestamp now) {
  AdvanceResult out{stage_machine::advance(state, now), std::nullopt};
  if (out.state.completed || out.state.current == state.current) return out;
  if (out.state.current == Stage::BodyWrapUp) {
    out.state = stage_machine::assemble_essay(out.state, now).state;
  } else if (is_analysis_stage(out.state.current)) {
    auto analysis = stage_machine::begin_analysis(out.state, now);
    out.state = std::move(analysis.state);
    out.analysis_input = std::move(analysis.essay);
  }
  return out;
}

SessionState replay(std::string session_id, std::string user_id, std::string_view assignment_prompt,
                    Timestamp created_at, const std::vector<SessionAction>& actions,
                    const FeedbackSource& feedback) {
  SessionState state =
      stage_machine::new_session(std::move(session_id), std::move(user_id), assignment_prompt, created_at);
  for (const auto& action : actions) {
    if (action.kind == SessionAction::Kind::Submit) {
      state = stage_machine::submit(state, action.input, feedback, action.at).state;
    } else {
      state = advance_with_entry(state, action.at).state;
    }
  }
  return state;
}

}  // namespace coach
