#include "coach/prompt_engine.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "coach/error.hpp"
#include "coach/utf8.hpp"

namespace coach {

namespace {

bool is_space(char32_t c) {
  return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\v' || c == U'\f' ||
         c == 0x00A0 || c == 0x3000 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 ||
         c == 0x2029;
}

bool is_alpha(char32_t c) {
  if (c < 0x80) return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z');
  if (c <= 0x00BF) return false;  // Latin-1 punctuation and symbols
  if (c == 0x00D7 || c == 0x00F7) return false;
  if (c >= 0x2000 && c <= 0x2BFF) return false;
  if (c >= 0x3000 && c <= 0x303F) return false;
  if (c == 0xFFFD) return false;
  return true;
}

std::string_view input_noun(Stage s) {
  switch (s) {
    case Stage::PreWriting: return "key questions";
    case Stage::IdentifyingResources: return "resource links";
    case Stage::ThesisStatement: return "thesis statement";
    case Stage::OutlineBuilding: return "outline";
    case Stage::IntroductionParagraph: return "introduction paragraph";
    case Stage::BodyParagraph: return "body paragraph";
    case Stage::ConclusionParagraph: return "conclusion paragraph";
    case Stage::GeneralRevising: return "revised essay";
    default: return "text";
  }
}

std::string redirect_for(ValidationReason reason, const StageSpec& spec) {
  const std::string noun(input_noun(spec.stage));
  switch (reason) {
    case ValidationReason::Empty:
      return "Please type your " + noun + " before submitting.";
    case ValidationReason::TooShort:
      return "Your " + noun + " is too short for useful feedback. Please write at least " +
             std::to_string(spec.min_tokens) + " words.";
    case ValidationReason::LowAlphaRatio:
      return "That does not look like your " + noun + ". Please type your " + noun +
             " in words so I can give you feedback.";
  }
  return {};
}

}  // namespace

std::string_view validation_reason_name(ValidationReason r) {
  switch (r) {
    case ValidationReason::Empty: return "empty";
    case ValidationReason::TooShort: return "too_short";
    case ValidationReason::LowAlphaRatio: return "low_alpha_ratio";
  }
  return "unknown";
}

std::size_t count_tokens(std::string_view input) {
  std::size_t tokens = 0;
  bool in_token = false;
  for (char32_t c : utf8::decode(input)) {
    if (is_space(c)) {
      in_token = false;
    } else if (!in_token) {
      in_token = true;
      ++tokens;
    }
  }
  return tokens;
}

double alpha_ratio(std::string_view input) {
  std::size_t visible = 0;
  std::size_t alpha = 0;
  for (char32_t c : utf8::decode(input)) {
    if (is_space(c)) continue;
    ++visible;
    if (is_alpha(c)) ++alpha;
  }
  return visible == 0 ? 0.0 : static_cast<double>(alpha) / static_cast<double>(visible);
}

ValidationResult validate_input(std::string_view input, const StageSpec& spec) {
  auto reject = [&](ValidationReason r) {
    return ValidationResult{false, r, redirect_for(r, spec)};
  };
  const std::size_t tokens = count_tokens(input);
  if (tokens == 0) return reject(ValidationReason::Empty);
  if (tokens < static_cast<std::size_t>(spec.min_tokens)) return reject(ValidationReason::TooShort);
  if (alpha_ratio(input) < kMinAlphaRatio) return reject(ValidationReason::LowAlphaRatio);
  return ValidationResult::ok();
}

// ---------------------------------------------------------------------------

std::string_view slot_name(ContextSlot s) {
  switch (s) {
    case ContextSlot::AssignmentPrompt: return "assignment_prompt";
    case ContextSlot::KeyQuestions: return "key_questions";
    case ContextSlot::Thesis: return "thesis";
    case ContextSlot::Outline: return "outline";
    case ContextSlot::Essay: return "essay";
    case ContextSlot::PriorFeedback: return "prior_feedback";
  }
  return "unknown";
}

std::string_view slot_label(ContextSlot s) {
  switch (s) {
    case ContextSlot::AssignmentPrompt: return "ASSIGNMENT";
    case ContextSlot::KeyQuestions: return "KEY QUESTIONS";
    case ContextSlot::Thesis: return "THESIS";
    case ContextSlot::Outline: return "OUTLINE";
    case ContextSlot::Essay: return "ESSAY";
    case ContextSlot::PriorFeedback: return "PRIOR FEEDBACK";
  }
  return "UNKNOWN";
}

std::optional<ContextSlot> slot_from_name(std::string_view name) {
  for (auto s : {ContextSlot::AssignmentPrompt, ContextSlot::KeyQuestions, ContextSlot::Thesis,
                 ContextSlot::Outline, ContextSlot::Essay, ContextSlot::PriorFeedback}) {
    if (slot_name(s) == name) return s;
  }
  return std::nullopt;
}

PromptTemplate template_from_json(const nlohmann::json& doc) {
  try {
    PromptTemplate t;
    auto stage = stage_from_name(doc.at("stage").get<std::string>());
    if (!stage) throw Error(ErrorCode::TemplateError, "template names an unknown stage");
    t.stage = *stage;
    t.version = doc.at("version").get<int>();
    t.persona = doc.at("persona").get<std::string>();
    t.limiters = doc.at("limiters").get<std::vector<std::string>>();
    t.criteria = doc.at("criteria").get<std::vector<std::string>>();
    t.output_format_instruction = doc.at("output_format").get<std::string>();
    t.validation_directive = doc.value("validation", std::string{});
    for (const auto& s : doc.at("slots")) {
      auto slot = slot_from_name(s.at("name").get<std::string>());
      if (!slot) {
        throw Error(ErrorCode::UnknownSlot, "template references unknown slot",
                    s.at("name").get<std::string>());
      }
      t.context_slots.push_back({*slot, s.value("required", false)});
    }
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::TemplateError, std::string("malformed template: ") + e.what());
  }
}

nlohmann::json template_to_json(const PromptTemplate& t) {
  nlohmann::json slots = nlohmann::json::array();
  for (const auto& s : t.context_slots) {
    slots.push_back({{"name", slot_name(s.slot)}, {"required", s.required}});
  }
  return {
      {"stage", stage_name(t.stage)},
      {"version", t.version},
      {"persona", t.persona},
      {"limiters", t.limiters},
      {"criteria", t.criteria},
      {"output_format", t.output_format_instruction},
      {"validation", t.validation_directive},
      {"slots", std::move(slots)},
  };
}

std::string join_list(const std::vector<std::string>& items) {
  switch (items.size()) {
    case 0: return {};
    case 1: return items[0];
    case 2: return items[0] + " and " + items[1];
    default: break;
  }
  std::string out;
  for (std::size_t i = 0; i + 1 < items.size(); ++i) out += items[i] + ", ";
  return out + "and " + items.back();
}

std::string criteria_instruction(const std::vector<std::string>& criteria) {
  if (criteria.empty()) return {};
  return "Evaluate the writer's submission on these criteria, in this order: " +
         join_list(criteria) + ".";
}

std::string system_message_for(const PromptTemplate& t) {
  std::vector<std::string> parts;
  auto add = [&](const std::string& p) {
    if (!p.empty()) parts.push_back(p);
  };
  add(t.persona);
  for (const auto& l : t.limiters) add(l);
  add(criteria_instruction(t.criteria));
  add(t.output_format_instruction);
  add(t.validation_directive);
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "\n\n";
    out += parts[i];
  }
  return out;
}

TemplateLibrary TemplateLibrary::from_templates(std::vector<PromptTemplate> templates) {
  TemplateLibrary lib;
  std::array<bool, kStageCount> seen{};
  for (auto& t : templates) {
    const auto idx = static_cast<std::size_t>(ordinal(t.stage));
    if (seen[idx]) {
      throw Error(ErrorCode::TemplateError, "duplicate template", std::string(stage_name(t.stage)));
    }
    if (t.criteria != stage_spec(t.stage).criteria) {
      throw Error(ErrorCode::TemplateError, "template criteria disagree with the stage table",
                  std::string(stage_name(t.stage)));
    }
    seen[idx] = true;
    lib.templates_[idx] = std::move(t);
  }
  for (Stage s : kAllStages) {
    if (!seen[static_cast<std::size_t>(ordinal(s))]) {
      throw Error(ErrorCode::TemplateError, "missing template", std::string(stage_name(s)));
    }
  }
  return lib;
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> files;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") files.push_back(entry.path());
  }
  if (ec) throw Error(ErrorCode::TemplateError, "cannot read template directory " + dir.string());
  std::sort(files.begin(), files.end());
  std::vector<PromptTemplate> templates;
  for (const auto& path : files) {
    std::ifstream in(path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorCode::TemplateError, "template is not valid JSON", path.filename().string());
    }
    templates.push_back(template_from_json(doc));
  }
  return from_templates(std::move(templates));
}

const PromptTemplate& TemplateLibrary::template_for(Stage s) const {
  return templates_.at(static_cast<std::size_t>(ordinal(s)));
}

// ---------------------------------------------------------------------------

std::string_view role_name(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "unknown";
}

std::optional<Role> role_from_name(std::string_view name) {
  if (name == "system") return Role::System;
  if (name == "user") return Role::User;
  if (name == "assistant") return Role::Assistant;
  return std::nullopt;
}

std::string format_sections(const std::vector<LabeledText>& sections) {
  std::string out;
  for (std::size_t i = 0; i < sections.size(); ++i) {
    if (i) out += "\n\n";
    out += sections[i].label + ":\n" + sections[i].text;
  }
  return out;
}

std::optional<std::string> slot_value(ContextSlot slot, const SessionState& session,
                                      const RenderExtras& extras) {
  switch (slot) {
    case ContextSlot::AssignmentPrompt:
      if (session.assignment_prompt.empty()) return std::nullopt;
      return session.assignment_prompt;
    case ContextSlot::KeyQuestions: return session.latest(Stage::PreWriting);
    case ContextSlot::Thesis: return session.latest(Stage::ThesisStatement);
    case ContextSlot::Outline: return session.latest(Stage::OutlineBuilding);
    case ContextSlot::Essay: return latest_essay(session);
    case ContextSlot::PriorFeedback: return extras.prior_feedback;
  }
  return std::nullopt;
}

PromptBundle render(const PromptTemplate& t, const SessionState& session, std::string_view input,
                    const RenderExtras& extras) {
  PromptBundle bundle;
  bundle.stage = t.stage;
  bundle.system_message = system_message_for(t);
  std::vector<LabeledText> sections;
  for (const auto& ref : t.context_slots) {
    auto value = slot_value(ref.slot, session, extras);
    if (!value) {
      if (ref.required) {
        throw Error(ErrorCode::UnknownSlot, "session cannot supply a required context slot",
                    std::string(slot_name(ref.slot)));
      }
      continue;
    }
    sections.push_back({std::string(slot_label(ref.slot)), std::move(*value)});
  }
  if (!sections.empty()) bundle.context_messages.push_back({Role::System, format_sections(sections)});
  bundle.user_message = std::string(input);
  return bundle;
}

}  // namespace coach
