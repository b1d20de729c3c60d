#include "coach/session.hpp"

#include <chrono>
#include <sstream>

#include "coach/error.hpp"

namespace coach {

Timestamp system_now() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

void ArtifactSlot::push(std::string submission) {
  if (latest) history.push_back(std::move(*latest));
  latest = std::move(submission);
  ++revision_count;
}

std::vector<std::string> ArtifactSlot::submissions() const {
  std::vector<std::string> out = history;
  if (latest) out.push_back(*latest);
  return out;
}

const ArtifactSlot* SessionState::slot(Stage s) const {
  auto it = artifacts.find(s);
  return it == artifacts.end() ? nullptr : &it->second;
}

std::optional<std::string> SessionState::latest(Stage s) const {
  const ArtifactSlot* sl = slot(s);
  if (!sl) return std::nullopt;
  return sl->latest;
}

std::optional<std::string> latest_essay(const SessionState& state) {
  if (auto revised = state.latest(Stage::GeneralRevising)) return revised;
  return state.latest(Stage::BodyWrapUp);
}

std::map<std::string, std::string> long_term_artifacts(const SessionState& state) {
  std::map<std::string, std::string> out{{"assignment", state.assignment_prompt}};
  auto put = [&](const char* key, std::optional<std::string> value) {
    if (value) out.emplace(key, std::move(*value));
  };
  put("key_questions", state.latest(Stage::PreWriting));
  put("thesis", state.latest(Stage::ThesisStatement));
  put("outline", state.latest(Stage::OutlineBuilding));
  put("essay", latest_essay(state));
  return out;
}

std::vector<std::string> split_urls(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string item;
  while (in >> item) out.push_back(item);
  return out;
}

std::optional<std::string> find_invariant_violation(const SessionState& state) {
  for (const auto& [stage, sl] : state.artifacts) {
    if (ordinal(stage) > ordinal(state.current)) {
      return "artifact present for future stage " + std::string(stage_name(stage));
    }
    const int expected = static_cast<int>(sl.history.size()) + (sl.latest ? 1 : 0);
    if (sl.revision_count != expected) {
      return "revision_count mismatch at " + std::string(stage_name(stage));
    }
    if (!sl.latest && !sl.history.empty()) {
      return "history without latest at " + std::string(stage_name(stage));
    }
  }
  if (state.completed && state.current != last_stage()) {
    return "completed before the final stage";
  }
  if (state.updated_at < state.created_at) return "updated_at precedes created_at";
  return std::nullopt;
}

nlohmann::json snapshot_to_json(const SessionState& state) {
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& [stage, sl] : state.artifacts) {
    nlohmann::json j;
    j["latest"] = sl.latest ? nlohmann::json(*sl.latest) : nlohmann::json(nullptr);
    j["revision_count"] = sl.revision_count;
    j["history"] = sl.history;
    artifacts[std::string(stage_name(stage))] = std::move(j);
  }
  return {
      {"schema_version", kSnapshotSchemaVersion},
      {"session_id", state.session_id},
      {"user_id", state.user_id},
      {"assignment_prompt", state.assignment_prompt},
      {"current", stage_name(state.current)},
      {"artifacts", std::move(artifacts)},
      {"created_at", state.created_at},
      {"updated_at", state.updated_at},
      {"completed", state.completed},
  };
}

SessionState snapshot_from_json(const nlohmann::json& doc) {
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kSnapshotSchemaVersion) {
      throw Error(ErrorCode::StorageUnavailable,
                  "unsupported snapshot schema_version " + std::to_string(version));
    }
    SessionState s;
    s.session_id = doc.at("session_id").get<std::string>();
    s.user_id = doc.at("user_id").get<std::string>();
    s.assignment_prompt = doc.at("assignment_prompt").get<std::string>();
    auto cur = stage_from_name(doc.at("current").get<std::string>());
    if (!cur) throw Error(ErrorCode::StorageUnavailable, "snapshot names an unknown stage");
    s.current = *cur;
    for (const auto& [name, j] : doc.at("artifacts").items()) {
      auto stage = stage_from_name(name);
      if (!stage) throw Error(ErrorCode::StorageUnavailable, "snapshot names an unknown stage");
      ArtifactSlot sl;
      if (!j.at("latest").is_null()) sl.latest = j.at("latest").get<std::string>();
      sl.revision_count = j.at("revision_count").get<int>();
      sl.history = j.at("history").get<std::vector<std::string>>();
      s.artifacts.emplace(*stage, std::move(sl));
    }
    s.created_at = doc.at("created_at").get<Timestamp>();
    s.updated_at = doc.at("updated_at").get<Timestamp>();
    s.completed = doc.at("completed").get<bool>();
    if (auto bad = find_invariant_violation(s)) {
      throw Error(ErrorCode::StorageUnavailable, "snapshot violates invariants: " + *bad);
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::StorageUnavailable, std::string("malformed snapshot: ") + e.what());
  }
}

std::string serialize_snapshot(const SessionState& state) { return snapshot_to_json(state).dump(); }

SessionState deserialize_snapshot(std::string_view text) {
  nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) throw Error(ErrorCode::StorageUnavailable, "snapshot is not valid JSON");
  return snapshot_from_json(doc);
}

}  // namespace coach
