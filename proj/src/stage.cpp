#include "coach/stage.hpp"

#include "coach/error.hpp"

namespace coach {

namespace {

struct StageNames {
  std::string_view id;
  std::string_view display;
};

constexpr std::array<StageNames, kStageCount> kNames = {{
    {"PreWriting", "Pre-writing"},
    {"IdentifyingResources", "Identifying Resources"},
    {"ThesisStatement", "Thesis Statement"},
    {"OutlineBuilding", "Outline Building"},
    {"IntroductionParagraph", "Introduction Paragraph"},
    {"BodyParagraph", "Body Paragraph"},
    {"BodyWrapUp", "Body Paragraph Wrap-up"},
    {"ConclusionParagraph", "Conclusion Paragraph"},
    {"GeneralRevising", "General Revising"},
    {"WordChoiceEvaluation", "Word Choice Evaluation"},
    {"GrammarCheck", "Grammar Check"},
}};

constexpr int kFreeTextMin = 3;
constexpr int kParagraphMin = 20;

std::array<StageSpec, kStageCount> build_table() {
  using IK = InputKind;
  const std::vector<std::string> prose = {"coherence", "cohesion", "clarity"};
  return {{
      {Stage::PreWriting, IK::FreeText, kFreeTextMin, true, {"alignment", "specificity"}},
      {Stage::IdentifyingResources, IK::UrlList, 0, false, {"reliability", "relevance"}},
      {Stage::ThesisStatement, IK::FreeText, kFreeTextMin, true, {"off-topic", "logical", "strong"}},
      {Stage::OutlineBuilding, IK::FreeText, kFreeTextMin, true, {"organization", "alignment", "completeness"}},
      {Stage::IntroductionParagraph, IK::Paragraph, kParagraphMin, true, prose},
      {Stage::BodyParagraph, IK::Paragraph, kParagraphMin, true, prose},
      {Stage::BodyWrapUp, IK::NoneRequired, 0, true, {}},
      {Stage::ConclusionParagraph, IK::Paragraph, kParagraphMin, true, prose},
      {Stage::GeneralRevising, IK::Paragraph, kParagraphMin, true, prose},
      {Stage::WordChoiceEvaluation, IK::NoneRequired, 0, true, {"precision", "formality", "variety"}},
      {Stage::GrammarCheck, IK::NoneRequired, 0, true, {"spelling", "grammar", "punctuation"}},
  }};
}

}  // namespace

std::string_view stage_name(Stage s) { return kNames.at(static_cast<std::size_t>(s)).id; }

std::string_view stage_display_name(Stage s) {
  return kNames.at(static_cast<std::size_t>(s)).display;
}

std::optional<Stage> stage_from_name(std::string_view name) {
  for (Stage s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

std::optional<Stage> stage_from_ordinal(int ord) {
  if (ord < 0 || ord >= static_cast<int>(kStageCount)) return std::nullopt;
  return static_cast<Stage>(ord);
}

std::string_view input_kind_name(InputKind k) {
  switch (k) {
    case InputKind::FreeText: return "free_text";
    case InputKind::UrlList: return "url_list";
    case InputKind::Paragraph: return "paragraph";
    case InputKind::NoneRequired: return "none_required";
  }
  return "unknown";
}

const StageSpec& stage_spec(Stage s) {
  static const std::array<StageSpec, kStageCount> table = build_table();
  return table.at(static_cast<std::size_t>(s));
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyAssignment: return "EmptyAssignment";
    case ErrorCode::ValidationRejected: return "ValidationRejected";
    case ErrorCode::SessionCompleted: return "SessionCompleted";
    case ErrorCode::InputNotAccepted: return "InputNotAccepted";
    case ErrorCode::MissingSubmission: return "MissingSubmission";
    case ErrorCode::MissingSection: return "MissingSection";
    case ErrorCode::WrongStage: return "WrongStage";
    case ErrorCode::Busy: return "Busy";
    case ErrorCode::UnknownSlot: return "UnknownSlot";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::MalformedResponse: return "MalformedResponse";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::MissingCriterion: return "MissingCriterion";
    case ErrorCode::OutOfOrderCriteria: return "OutOfOrderCriteria";
    case ErrorCode::EmptyResponse: return "EmptyResponse";
    case ErrorCode::UnparsableUrl: return "UnparsableUrl";
    case ErrorCode::DuplicateUsername: return "DuplicateUsername";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::StorageUnavailable: return "StorageUnavailable";
    case ErrorCode::BadRequest: return "BadRequest";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::Forbidden: return "Forbidden";
  }
  return "Unknown";
}

}  // namespace coach
