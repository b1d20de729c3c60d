#pragma once

#include <json.hpp>

#include "coach/error.hpp"
#include "coach/feedback.hpp"
#include "coach/persistence.hpp"
#include "coach/prompt_engine.hpp"
#include "coach/resource_eval.hpp"
#include "coach/session.hpp"
#include "coach/task_service.hpp"

// Wire representations of the API payloads. Field names are part of the
// public contract; see data/openapi.json.
namespace coach::wire {

nlohmann::json to_json(const Error& e);
nlohmann::json to_json(const ValidationResult& v);
nlohmann::json to_json(const FeedbackReport& r);
nlohmann::json to_json(const Annotation& a);
nlohmann::json to_json(const AnnotationClaim& c);
nlohmann::json to_json(const ReliabilityAssessment& a);
nlohmann::json to_json(const MessageRecord& m);
nlohmann::json to_json(const StageFeedback& f);

Annotation annotation_from_json(const nlohmann::json& j);
FeedbackReport feedback_report_from_json(const nlohmann::json& j);

/// Actions the writer may take now: empty once completed; "submit" only at
/// stages that take input; "advance" only when the advance rule allows it.
std::vector<std::string> available_actions(const SessionState& s);

nlohmann::json task_view(const SessionState& s, const std::optional<StageFeedback>& analysis = std::nullopt);

}  // namespace coach::wire
