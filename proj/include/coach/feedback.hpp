#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coach/error.hpp"
#include "coach/stage.hpp"

namespace coach {

enum class Verdict { Ready, Revise };

std::string_view verdict_name(Verdict v);

struct FeedbackSection {
  std::string criterion;
  std::string body;
  bool operator==(const FeedbackSection&) const = default;
};

struct FeedbackReport {
  Stage stage = Stage::PreWriting;
  std::vector<FeedbackSection> sections;
  Verdict verdict = Verdict::Revise;
  std::string raw;
  bool operator==(const FeedbackReport&) const = default;
};

/// Splits a model response into the stage's criteria sections.
///
/// Sections start at lines of the form `### <Criterion>` (matched
/// case-insensitively against the stage criteria; other `###` lines stay in
/// the body). The last non-blank line may be `VERDICT: ready|revise`; when
/// absent the verdict is revise. Fenced `annotations` blocks are removed from
/// section bodies. Throws EmptyResponse, MissingCriterion (detail = name) or
/// OutOfOrderCriteria.
FeedbackReport parse_feedback(std::string_view raw, const StageSpec& spec);

/// Inverse of parse_feedback for bodies that contain no header, verdict or
/// fence lines.
std::string render_feedback(const std::vector<FeedbackSection>& sections, Verdict verdict);

// ---------------------------------------------------------------------------

enum class AnnotationCategory { Grammar, WordChoice };

std::string_view category_name(AnnotationCategory c);
std::optional<AnnotationCategory> category_from_name(std::string_view name);

struct AnnotationClaim {
  std::string quote;
  AnnotationCategory category = AnnotationCategory::Grammar;
  std::string suggestion;
  std::optional<std::string> explanation;
  bool operator==(const AnnotationClaim&) const = default;
};

struct ClaimExtraction {
  std::vector<AnnotationClaim> claims;
  std::size_t skipped = 0;
};

/// Reads claim lines from fenced blocks (info string empty or
/// `annotations`):
///
///   QUOTE: "<snippet>" | CATEGORY: <grammar|word-choice> | SUGGESTION: "<text>"
///
/// optionally followed by `| EXPLANATION: "<text>"`. Inside quotes, `\"` and
/// `\\` are escapes. Malformed lines are counted in `skipped`.
ClaimExtraction extract_claims(std::string_view raw);

/// Formats one claim line in the syntax extract_claims reads.
std::string format_claim_line(const AnnotationClaim& claim);

/// Half-open span [start, end) in Unicode scalar units of the essay.
struct Annotation {
  std::size_t start = 0;
  std::size_t end = 0;
  AnnotationCategory category = AnnotationCategory::Grammar;
  std::string suggestion;
  std::optional<std::string> explanation;
  bool operator==(const Annotation&) const = default;
};

struct LocateResult {
  std::vector<Annotation> annotations;  // sorted by start
  std::vector<AnnotationClaim> unmatched;  // in processing order
};

/// Order in which claims are placed: grammar claims first, then word-choice
/// claims, each group keeping its input order.
std::vector<AnnotationClaim> placement_order(const std::vector<AnnotationClaim>& claims);

/// Places each claim, in placement order, at the leftmost exact occurrence of
/// its quote that does not overlap a span already placed. Claims with no such
/// occurrence are returned as unmatched.
LocateResult locate(std::string_view essay, const std::vector<AnnotationClaim>& claims);

}  // namespace coach
