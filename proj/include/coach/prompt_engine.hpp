#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "coach/session.hpp"
#include "coach/stage.hpp"

namespace coach {

// ---------------------------------------------------------------------------
// Input validation
// ---------------------------------------------------------------------------

enum class ValidationReason { Empty, TooShort, LowAlphaRatio };

std::string_view validation_reason_name(ValidationReason r);

struct ValidationResult {
  bool valid = true;
  std::optional<ValidationReason> reason;
  std::optional<std::string> redirect_message;

  static ValidationResult ok() { return {}; }
  bool operator==(const ValidationResult&) const = default;
};

/// Minimum fraction of alphabetic characters among non-whitespace ones.
inline constexpr double kMinAlphaRatio = 0.5;

/// Deterministic floor beneath the model-side validation directive.
///
/// An input is valid when its trimmed form is non-empty, it has at least
/// `spec.min_tokens` whitespace-separated tokens, and at least half of its
/// non-whitespace characters are alphabetic. Characters are counted as
/// Unicode scalar values; non-ASCII letters count as alphabetic, while
/// Latin-1 symbols, general punctuation, arrows, math and technical symbols
/// and CJK punctuation do not.
ValidationResult validate_input(std::string_view input, const StageSpec& spec);

std::size_t count_tokens(std::string_view input);
double alpha_ratio(std::string_view input);

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

enum class ContextSlot { AssignmentPrompt, KeyQuestions, Thesis, Outline, Essay, PriorFeedback };

std::string_view slot_name(ContextSlot s);
/// Section label used when the slot is rendered, e.g. "THESIS".
std::string_view slot_label(ContextSlot s);
std::optional<ContextSlot> slot_from_name(std::string_view name);

struct SlotRef {
  ContextSlot slot;
  bool required = false;
  bool operator==(const SlotRef&) const = default;
};

struct PromptTemplate {
  Stage stage = Stage::PreWriting;
  int version = 1;
  std::string persona;
  std::vector<std::string> limiters;
  std::vector<std::string> criteria;
  std::string output_format_instruction;
  std::string validation_directive;
  std::vector<SlotRef> context_slots;

  bool operator==(const PromptTemplate&) const = default;
};

/// Template file codec. The on-disk container is a JSON object:
///   {"stage", "version", "persona", "limiters"[], "criteria"[],
///    "output_format", "validation", "slots"[{"name","required"}]}
PromptTemplate template_from_json(const nlohmann::json& doc);
nlohmann::json template_to_json(const PromptTemplate& t);

/// "Evaluate ... on these criteria, in this order: a, b, and c."
std::string criteria_instruction(const std::vector<std::string>& criteria);

/// Human list joining: "a", "a and b", "a, b, and c".
std::string join_list(const std::vector<std::string>& items);

/// Persona, limiters, criteria instruction, output format and validation
/// directive joined by blank lines, empty parts skipped.
std::string system_message_for(const PromptTemplate& t);

/// The per-stage templates, loaded once from a directory of
/// `NN_<StageName>.json` files and immutable afterwards. Loading checks each
/// template's criteria against the stage table.
class TemplateLibrary {
 public:
  static TemplateLibrary load(const std::filesystem::path& dir);
  static TemplateLibrary from_templates(std::vector<PromptTemplate> templates);

  const PromptTemplate& template_for(Stage s) const;

 private:
  std::array<PromptTemplate, kStageCount> templates_{};
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

enum class Role { System, User, Assistant };

std::string_view role_name(Role r);
std::optional<Role> role_from_name(std::string_view name);

struct ChatMessage {
  Role role;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct PromptBundle {
  Stage stage = Stage::PreWriting;
  std::string system_message;
  std::vector<ChatMessage> context_messages;
  std::string user_message;
  bool operator==(const PromptBundle&) const = default;
};

struct LabeledText {
  std::string label;
  std::string text;
  bool operator==(const LabeledText&) const = default;
};

/// "LABEL:\ntext" sections separated by blank lines.
std::string format_sections(const std::vector<LabeledText>& sections);

struct RenderExtras {
  std::optional<std::string> prior_feedback;
};

/// Builds the message bundle for one model call. Context slots the session
/// can supply become labeled sections of a single system context message;
/// absent optional slots are omitted. Throws UnknownSlot when a required
/// slot cannot be supplied.
PromptBundle render(const PromptTemplate& t, const SessionState& session, std::string_view input,
                    const RenderExtras& extras = {});

/// Value a slot would take for this session, if any.
std::optional<std::string> slot_value(ContextSlot slot, const SessionState& session,
                                      const RenderExtras& extras = {});

}  // namespace coach
