#include "coach/feedback.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "coach/error.hpp"
#include "coach/utf8.hpp"

namespace coach {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool istarts_with(std::string_view s, std::string_view prefix) {
  return s.size() >= prefix.size() && lower(s.substr(0, prefix.size())) == lower(prefix);
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  return lines;
}

bool is_fence(std::string_view line) { return trim(line).substr(0, 3) == "```"; }

/// True when the fence opening line introduces a claims block.
bool is_claim_fence(std::string_view line) {
  auto info = lower(trim(trim(line).substr(3)));
  return info.empty() || info == "annotations";
}

/// Criterion name of a `### Name` header line, or nullopt.
std::optional<std::string> header_name(std::string_view line) {
  auto t = trim(line);
  if (t.substr(0, 3) != "###" || t.substr(0, 4) == "####") return std::nullopt;
  auto name = trim(t.substr(3));
  while (!name.empty() && (name.front() == '*' || name.front() == '_')) name.remove_prefix(1);
  while (!name.empty() && (name.back() == '*' || name.back() == '_' || name.back() == ':')) {
    name.remove_suffix(1);
  }
  name = trim(name);
  if (name.empty()) return std::nullopt;
  return lower(name);
}

std::optional<Verdict> verdict_value(std::string_view line) {
  auto t = trim(line);
  if (!istarts_with(t, "VERDICT:")) return std::nullopt;
  auto v = lower(trim(t.substr(8)));
  if (v == "ready") return Verdict::Ready;
  return Verdict::Revise;
}

}  // namespace

std::string_view verdict_name(Verdict v) { return v == Verdict::Ready ? "ready" : "revise"; }

FeedbackReport parse_feedback(std::string_view raw, const StageSpec& spec) {
  if (trim(raw).empty()) throw Error(ErrorCode::EmptyResponse, "model returned an empty response");

  FeedbackReport report;
  report.stage = spec.stage;
  report.raw = std::string(raw);

  auto lines = split_lines(raw);

  // Classify lines: which are inside fences, which fences are claim blocks.
  enum class Kind { Text, ClaimBlock, OtherFence };
  std::vector<Kind> kinds(lines.size(), Kind::Text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!is_fence(lines[i])) continue;
    const Kind k = is_claim_fence(lines[i]) ? Kind::ClaimBlock : Kind::OtherFence;
    std::size_t j = i;
    kinds[j] = k;
    while (++j < lines.size()) {
      kinds[j] = k;
      if (is_fence(lines[j])) break;
    }
    i = j;
  }

  // Trailing verdict line.
  std::size_t end = lines.size();
  for (std::size_t i = lines.size(); i-- > 0;) {
    if (trim(lines[i]).empty()) continue;
    if (kinds[i] == Kind::Text) {
      if (auto v = verdict_value(lines[i])) {
        report.verdict = *v;
        end = i;
      }
    }
    break;
  }

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < spec.criteria.size(); ++i) index.emplace(lower(spec.criteria[i]), i);

  struct Found {
    std::size_t criterion;
    std::size_t line;
  };
  std::vector<Found> found;
  for (std::size_t i = 0; i < end; ++i) {
    if (kinds[i] != Kind::Text) continue;
    auto name = header_name(lines[i]);
    if (!name) continue;
    auto it = index.find(*name);
    if (it != index.end()) found.push_back({it->second, i});
  }

  for (std::size_t c = 0; c < spec.criteria.size(); ++c) {
    const bool present =
        std::any_of(found.begin(), found.end(), [&](const Found& f) { return f.criterion == c; });
    if (!present) {
      throw Error(ErrorCode::MissingCriterion, "response lacks a section for " + spec.criteria[c],
                  spec.criteria[c]);
    }
  }
  if (found.size() != spec.criteria.size()) {
    throw Error(ErrorCode::OutOfOrderCriteria, "response repeats a criterion section");
  }
  for (std::size_t c = 0; c < found.size(); ++c) {
    if (found[c].criterion != c) {
      throw Error(ErrorCode::OutOfOrderCriteria, "response sections are not in criteria order");
    }
  }

  for (std::size_t c = 0; c < found.size(); ++c) {
    const std::size_t from = found[c].line + 1;
    const std::size_t to = c + 1 < found.size() ? found[c + 1].line : end;
    std::string body;
    for (std::size_t i = from; i < to; ++i) {
      if (kinds[i] == Kind::ClaimBlock) continue;
      body.append(lines[i]);
      body.push_back('\n');
    }
    report.sections.push_back({spec.criteria[c], std::string(trim(body))});
  }
  return report;
}

std::string render_feedback(const std::vector<FeedbackSection>& sections, Verdict verdict) {
  std::string out;
  for (const auto& s : sections) {
    out += "### " + s.criterion + "\n" + s.body + "\n\n";
  }
  out += "VERDICT: ";
  out += verdict_name(verdict);
  return out;
}

// ---------------------------------------------------------------------------

std::string_view category_name(AnnotationCategory c) {
  return c == AnnotationCategory::Grammar ? "grammar" : "word_choice";
}

std::optional<AnnotationCategory> category_from_name(std::string_view name) {
  auto n = lower(trim(name));
  if (n == "grammar") return AnnotationCategory::Grammar;
  if (n == "word-choice" || n == "word_choice" || n == "word choice") {
    return AnnotationCategory::WordChoice;
  }
  return std::nullopt;
}

namespace {

class ClaimLineParser {
 public:
  explicit ClaimLineParser(std::string_view line) : s_(line) {}

  std::optional<AnnotationClaim> parse() {
    AnnotationClaim claim;
    if (!key("QUOTE:")) return std::nullopt;
    auto quote = quoted();
    if (!quote || quote->empty()) return std::nullopt;
    claim.quote = std::move(*quote);
    if (!bar() || !key("CATEGORY:")) return std::nullopt;
    auto cat = category_from_name(word());
    if (!cat) return std::nullopt;
    claim.category = *cat;
    if (!bar() || !key("SUGGESTION:")) return std::nullopt;
    auto suggestion = quoted();
    if (!suggestion) return std::nullopt;
    claim.suggestion = std::move(*suggestion);
    skip_ws();
    if (pos_ < s_.size()) {
      if (!bar() || !key("EXPLANATION:")) return std::nullopt;
      auto explanation = quoted();
      if (!explanation) return std::nullopt;
      claim.explanation = std::move(*explanation);
      skip_ws();
      if (pos_ < s_.size()) return std::nullopt;
    }
    return claim;
  }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }

  bool key(std::string_view k) {
    skip_ws();
    if (!istarts_with(s_.substr(pos_), k)) return false;
    pos_ += k.size();
    return true;
  }

  bool bar() {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '|') return false;
    ++pos_;
    return true;
  }

  std::string_view word() {
    skip_ws();
    const auto start = pos_;
    while (pos_ < s_.size() && s_[pos_] != '|' && s_[pos_] != ' ' && s_[pos_] != '\t') ++pos_;
    return s_.substr(start, pos_ - start);
  }

  std::optional<std::string> quoted() {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != '"') return std::nullopt;
    ++pos_;
    std::string out;
    while (pos_ < s_.size()) {
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c == '\\' && pos_ < s_.size() && (s_[pos_] == '"' || s_[pos_] == '\\')) {
        out.push_back(s_[pos_++]);
        continue;
      }
      out.push_back(c);
    }
    return std::nullopt;
  }

  std::string_view s_;
  std::size_t pos_ = 0;
};

std::string escape_quoted(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

ClaimExtraction extract_claims(std::string_view raw) {
  ClaimExtraction out;
  auto lines = split_lines(raw);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!is_fence(lines[i])) continue;
    const bool claims = is_claim_fence(lines[i]);
    std::size_t j = i + 1;
    for (; j < lines.size() && !is_fence(lines[j]); ++j) {
      if (!claims || trim(lines[j]).empty()) continue;
      if (auto claim = ClaimLineParser(lines[j]).parse()) {
        out.claims.push_back(std::move(*claim));
      } else {
        ++out.skipped;
      }
    }
    i = j;
  }
  return out;
}

std::string format_claim_line(const AnnotationClaim& claim) {
  std::string line = "QUOTE: " + escape_quoted(claim.quote) + " | CATEGORY: " +
                     (claim.category == AnnotationCategory::Grammar ? "grammar" : "word-choice") +
                     " | SUGGESTION: " + escape_quoted(claim.suggestion);
  if (claim.explanation) line += " | EXPLANATION: " + escape_quoted(*claim.explanation);
  return line;
}

// ---------------------------------------------------------------------------

std::vector<AnnotationClaim> placement_order(const std::vector<AnnotationClaim>& claims) {
  std::vector<AnnotationClaim> ordered = claims;
  std::stable_partition(ordered.begin(), ordered.end(), [](const AnnotationClaim& c) {
    return c.category == AnnotationCategory::Grammar;
  });
  return ordered;
}

LocateResult locate(std::string_view essay, const std::vector<AnnotationClaim>& claims) {
  LocateResult result;
  const std::u32string text = utf8::decode(essay);

  // Placed spans keyed by start; non-overlapping, so ends are ordered too.
  std::map<std::size_t, std::size_t> placed;
  auto overlaps = [&](std::size_t start, std::size_t end) {
    auto it = placed.lower_bound(end);  // first span starting at or after end
    if (it == placed.begin()) return false;
    --it;
    return it->second > start;
  };

  for (auto& claim : placement_order(claims)) {
    const std::u32string quote = utf8::decode(claim.quote);
    std::optional<std::size_t> hit;
    if (!quote.empty()) {
      for (auto pos = text.find(quote); pos != std::u32string::npos; pos = text.find(quote, pos + 1)) {
        if (!overlaps(pos, pos + quote.size())) {
          hit = pos;
          break;
        }
      }
    }
    if (!hit) {
      result.unmatched.push_back(std::move(claim));
      continue;
    }
    placed.emplace(*hit, *hit + quote.size());
    result.annotations.push_back(
        {*hit, *hit + quote.size(), claim.category, claim.suggestion, claim.explanation});
  }
  std::sort(result.annotations.begin(), result.annotations.end(),
            [](const Annotation& a, const Annotation& b) { return a.start < b.start; });
  return result;
}

}  // namespace coach
