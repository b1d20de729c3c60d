#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "coach/stage.hpp"

namespace coach {

/// Milliseconds since the Unix epoch.
using Timestamp = std::int64_t;
using Clock = std::function<Timestamp()>;

Timestamp system_now();

/// One stage's submissions. For most stages `history` holds superseded
/// drafts; at BodyParagraph it is the list of earlier paragraphs.
struct ArtifactSlot {
  std::optional<std::string> latest;
  int revision_count = 0;
  std::vector<std::string> history;

  bool empty() const { return !latest.has_value(); }
  void push(std::string submission);
  /// history followed by latest, in submission order.
  std::vector<std::string> submissions() const;

  bool operator==(const ArtifactSlot&) const = default;
};

struct SessionState {
  std::string session_id;
  std::string user_id;
  std::string assignment_prompt;
  Stage current = Stage::PreWriting;
  std::map<Stage, ArtifactSlot> artifacts;
  Timestamp created_at = 0;
  Timestamp updated_at = 0;
  bool completed = false;

  const ArtifactSlot* slot(Stage s) const;
  std::optional<std::string> latest(Stage s) const;

  bool operator==(const SessionState&) const = default;
};

/// Most recent full-essay artifact: the revised essay when one exists,
/// otherwise the assembled one.
std::optional<std::string> latest_essay(const SessionState& state);

/// Named long-term artifacts: "assignment" always, and "key_questions",
/// "thesis", "outline" and "essay" when the session holds them.
std::map<std::string, std::string> long_term_artifacts(const SessionState& state);

/// Splits a url_list artifact (newline or whitespace separated) into entries.
std::vector<std::string> split_urls(std::string_view text);

/// Returns a description of the first violated SessionState/ArtifactSlot
/// invariant, or nullopt when the state is well-formed.
std::optional<std::string> find_invariant_violation(const SessionState& state);

inline constexpr int kSnapshotSchemaVersion = 1;

nlohmann::json snapshot_to_json(const SessionState& state);
SessionState snapshot_from_json(const nlohmann::json& doc);
/// Canonical serialized form; identical states always produce identical bytes.
std::string serialize_snapshot(const SessionState& state);
SessionState deserialize_snapshot(std::string_view text);

}  // namespace coach
