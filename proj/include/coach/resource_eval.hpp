#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace coach {

class LlmProvider;

enum class Scheme { Http, Https };

struct UrlParts {
  Scheme scheme = Scheme::Https;
  std::string host;
  std::string registrable_domain;
  std::string tld;
  std::string path;
  bool operator==(const UrlParts&) const = default;
};

/// Absolute http/https URLs only. Surrounding whitespace is trimmed, the host
/// is lowercased and stripped of userinfo, port and a trailing dot; `path`
/// keeps everything after the authority. Throws UnparsableUrl.
///
/// `registrable_domain` is left empty; PublicSuffixList::registrable_domain
/// fills it.
UrlParts split_url(std::string_view text);

/// Public suffix rules (plain, wildcard and exception) from a
/// publicsuffix.org snapshot.
class PublicSuffixList {
 public:
  static PublicSuffixList load(const std::filesystem::path& file);
  static PublicSuffixList from_text(std::string_view text);

  /// Public suffix plus one label; the host itself when the host is a
  /// public suffix or a single label.
  std::string registrable_domain(std::string_view host) const;
  std::string public_suffix(std::string_view host) const;

  std::size_t size() const { return rules_.size() + wildcards_.size() + exceptions_.size(); }

 private:
  std::unordered_set<std::string> rules_;
  std::unordered_set<std::string> wildcards_;   // "*.ck" stored as "ck"
  std::unordered_set<std::string> exceptions_;  // "!www.ck" stored as "www.ck"
};

/// One registrable domain per line; '#' starts a comment.
class DomainAllowlist {
 public:
  static DomainAllowlist load(const std::filesystem::path& file);
  static DomainAllowlist from_text(std::string_view text);
  bool contains(std::string_view registrable_domain) const;
  std::size_t size() const { return domains_.size(); }

 private:
  std::unordered_set<std::string> domains_;
};

enum class Tier { High, Medium, Low, Invalid };

std::string_view tier_name(Tier t);

struct ReliabilityAssessment {
  std::string url;
  Tier tier = Tier::Invalid;
  std::vector<std::string> reasons;
  std::optional<std::string> rationale;
  bool operator==(const ReliabilityAssessment&) const = default;
};

/// Rule ids reported in ReliabilityAssessment::reasons.
namespace rule {
inline constexpr std::string_view kTldEdu = "tld_edu";
inline constexpr std::string_view kTldGov = "tld_gov";
inline constexpr std::string_view kAllowlisted = "allowlisted";
inline constexpr std::string_view kHttpDowngrade = "http_downgrade";
inline constexpr std::string_view kUnrecognized = "unrecognized_domain";
inline constexpr std::string_view kUnparsable = "unparsable";
}  // namespace rule

class ResourceEvaluator {
 public:
  ResourceEvaluator(PublicSuffixList suffixes, DomainAllowlist allowlist);

  /// split_url plus registrable domain.
  UrlParts parse_url(std::string_view text) const;

  /// Tier table: .edu/.gov → High, allowlisted domain → Medium, otherwise
  /// Low; plain http caps the tier at Low. Depends only on scheme,
  /// registrable domain and tld.
  ReliabilityAssessment score(const UrlParts& parts, std::string url = {}) const;

  /// Order-preserving; unparsable entries become Invalid. With a provider,
  /// each parsed entry gets a model-written rationale that explains (never
  /// changes) the tier; a provider failure leaves the rationale empty.
  std::vector<ReliabilityAssessment> evaluate_all(const std::vector<std::string>& urls,
                                                  LlmProvider* rationale_provider = nullptr) const;

 private:
  PublicSuffixList suffixes_;
  DomainAllowlist allowlist_;
};

}  // namespace coach
