#include "coach/api_json.hpp"

namespace coach::wire {

using nlohmann::json;

namespace {

json optional_text(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

}  // namespace

json to_json(const Error& e) {
  json j{{"code", to_string(e.code())}, {"message", e.what()}};
  if (!e.detail().empty()) j["detail"] = e.detail();
  return j;
}

json to_json(const ValidationResult& v) {
  return {{"valid", v.valid},
          {"reason", v.reason ? json(validation_reason_name(*v.reason)) : json(nullptr)},
          {"redirect_message", optional_text(v.redirect_message)}};
}

json to_json(const FeedbackReport& r) {
  json sections = json::array();
  for (const auto& s : r.sections) sections.push_back({{"criterion", s.criterion}, {"body", s.body}});
  return {{"stage", stage_name(r.stage)},
          {"sections", std::move(sections)},
          {"verdict", verdict_name(r.verdict)},
          {"raw", r.raw}};
}

FeedbackReport feedback_report_from_json(const json& j) {
  FeedbackReport r;
  r.stage = stage_from_name(j.at("stage").get<std::string>()).value();
  for (const auto& s : j.at("sections")) {
    r.sections.push_back({s.at("criterion").get<std::string>(), s.at("body").get<std::string>()});
  }
  r.verdict = j.at("verdict").get<std::string>() == "ready" ? Verdict::Ready : Verdict::Revise;
  r.raw = j.at("raw").get<std::string>();
  return r;
}

json to_json(const Annotation& a) {
  return {{"start", a.start},
          {"end", a.end},
          {"category", category_name(a.category)},
          {"suggestion", a.suggestion},
          {"explanation", optional_text(a.explanation)}};
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.start = j.at("start").get<std::size_t>();
  a.end = j.at("end").get<std::size_t>();
  a.category = category_from_name(j.at("category").get<std::string>()).value();
  a.suggestion = j.at("suggestion").get<std::string>();
  if (j.contains("explanation") && !j.at("explanation").is_null()) {
    a.explanation = j.at("explanation").get<std::string>();
  }
  return a;
}

json to_json(const AnnotationClaim& c) {
  return {{"quote", c.quote},
          {"category", category_name(c.category)},
          {"suggestion", c.suggestion},
          {"explanation", optional_text(c.explanation)}};
}

json to_json(const ReliabilityAssessment& a) {
  return {{"url", a.url}, {"tier", tier_name(a.tier)}, {"reasons", a.reasons}, {"rationale", optional_text(a.rationale)}};
}

json to_json(const MessageRecord& m) {
  return {{"message_id", m.message_id}, {"role", role_name(m.role)}, {"stage", stage_name(m.stage)},
          {"content", m.content},       {"created_at", m.created_at}, {"seq", m.seq}};
}

json to_json(const StageFeedback& f) {
  json annotations = json::array();
  for (const auto& a : f.located.annotations) annotations.push_back(to_json(a));
  json unmatched = json::array();
  for (const auto& c : f.located.unmatched) unmatched.push_back(to_json(c));
  json j{{"stage", stage_name(f.stage)},
         {"feedback", f.report ? to_json(*f.report) : json(nullptr)},
         {"annotations", std::move(annotations)},
         {"unmatched", std::move(unmatched)},
         {"skipped_claims", f.skipped_claims},
         {"analyzed_text", f.analyzed_text}};
  if (f.error) j["feedback_error"] = to_json(*f.error);
  if (!f.report && f.raw) j["raw"] = *f.raw;
  return j;
}

std::vector<std::string> available_actions(const SessionState& s) {
  if (s.completed) return {};
  std::vector<std::string> actions;
  const StageSpec& spec = stage_spec(s.current);
  if (spec.input_kind != InputKind::NoneRequired) actions.emplace_back("submit");
  const ArtifactSlot* slot = s.slot(s.current);
  if (!spec.requires_submission_to_advance || (slot && !slot->empty())) actions.emplace_back("advance");
  return actions;
}

json task_view(const SessionState& s, const std::optional<StageFeedback>& analysis) {
  const StageSpec& spec = stage_spec(s.current);
  json artifacts = json::array();
  for (const auto& [stage, slot] : s.artifacts) {
    artifacts.push_back({{"stage", stage_name(stage)},
                         {"ordinal", ordinal(stage)},
                         {"latest", optional_text(slot.latest)},
                         {"revision_count", slot.revision_count},
                         {"history", slot.history}});
  }
  json view{{"task_id", s.session_id},
            {"assignment_prompt", s.assignment_prompt},
            {"stage",
             {{"name", stage_name(s.current)},
              {"display_name", stage_display_name(s.current)},
              {"ordinal", ordinal(s.current)},
              {"input_kind", input_kind_name(spec.input_kind)},
              {"min_tokens", spec.min_tokens},
              {"criteria", spec.criteria}}},
            {"artifacts", std::move(artifacts)},
            {"completed", s.completed},
            {"available_actions", available_actions(s)},
            {"created_at", s.created_at},
            {"updated_at", s.updated_at}};
  if (analysis) view["analysis"] = to_json(*analysis);
  return view;
}

}  // namespace coach::wire
