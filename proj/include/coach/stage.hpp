#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace coach {

/// The eleven writing stages, in the only order a writer may traverse them.
enum class Stage : std::uint8_t {
  PreWriting = 0,
  IdentifyingResources,
  ThesisStatement,
  OutlineBuilding,
  IntroductionParagraph,
  BodyParagraph,
  BodyWrapUp,
  ConclusionParagraph,
  GeneralRevising,
  WordChoiceEvaluation,
  GrammarCheck,
};

inline constexpr std::size_t kStageCount = 11;

inline constexpr std::array<Stage, kStageCount> kAllStages = {
    Stage::PreWriting,           Stage::IdentifyingResources, Stage::ThesisStatement,
    Stage::OutlineBuilding,      Stage::IntroductionParagraph, Stage::BodyParagraph,
    Stage::BodyWrapUp,           Stage::ConclusionParagraph,  Stage::GeneralRevising,
    Stage::WordChoiceEvaluation, Stage::GrammarCheck,
};

constexpr int ordinal(Stage s) { return static_cast<int>(s); }
constexpr Stage first_stage() { return Stage::PreWriting; }
constexpr Stage last_stage() { return Stage::GrammarCheck; }

/// Identifier form, e.g. "ThesisStatement". Used on the wire and in storage.
std::string_view stage_name(Stage s);
/// Human form, e.g. "Thesis Statement".
std::string_view stage_display_name(Stage s);
std::optional<Stage> stage_from_name(std::string_view name);
std::optional<Stage> stage_from_ordinal(int ord);

enum class InputKind { FreeText, UrlList, Paragraph, NoneRequired };

std::string_view input_kind_name(InputKind k);

struct StageSpec {
  Stage stage;
  InputKind input_kind;
  int min_tokens;
  bool requires_submission_to_advance;
  std::vector<std::string> criteria;
};

/// Static per-stage table. Pure.
const StageSpec& stage_spec(Stage s);

/// Stages whose artifact is produced by the system rather than typed by the writer.
constexpr bool is_analysis_stage(Stage s) {
  return s == Stage::WordChoiceEvaluation || s == Stage::GrammarCheck;
}

}  // namespace coach
