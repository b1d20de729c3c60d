#include "coach/resource_eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "coach/error.hpp"
#include "coach/llm_gateway.hpp"
#include "coach/prompt_engine.hpp"

namespace coach {

namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n\v\f";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string_view> labels_of(std::string_view host) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto dot = host.find('.', pos);
    out.push_back(host.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos));
    if (dot == std::string_view::npos) break;
    pos = dot + 1;
  }
  return out;
}

std::string join_from(const std::vector<std::string_view>& labels, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < labels.size(); ++i) {
    if (i > from) out.push_back('.');
    out.append(labels[i]);
  }
  return out;
}

[[noreturn]] void unparsable(std::string_view why) {
  throw Error(ErrorCode::UnparsableUrl, "not an absolute http(s) URL: " + std::string(why));
}

bool valid_host_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' || c == '_' ||
         static_cast<unsigned char>(c) >= 0x80;
}

}  // namespace

UrlParts split_url(std::string_view text) {
  auto t = trim(text);
  UrlParts parts;
  const auto scheme_end = t.find("://");
  if (scheme_end == std::string_view::npos) unparsable("missing scheme");
  const auto scheme = lower(t.substr(0, scheme_end));
  if (scheme == "https") {
    parts.scheme = Scheme::Https;
  } else if (scheme == "http") {
    parts.scheme = Scheme::Http;
  } else {
    unparsable("unsupported scheme");
  }
  auto rest = t.substr(scheme_end + 3);
  const auto authority_end = rest.find_first_of("/?#");
  auto authority = rest.substr(0, authority_end);
  parts.path = authority_end == std::string_view::npos ? std::string{} : std::string(rest.substr(authority_end));

  if (auto at = authority.rfind('@'); at != std::string_view::npos) authority.remove_prefix(at + 1);
  if (!authority.empty() && authority.front() == '[') unparsable("IP literal hosts are not supported");
  if (auto colon = authority.find(':'); colon != std::string_view::npos) {
    auto port = authority.substr(colon + 1);
    if (!std::all_of(port.begin(), port.end(), [](unsigned char c) { return std::isdigit(c); })) {
      unparsable("bad port");
    }
    authority = authority.substr(0, colon);
  }
  if (!authority.empty() && authority.back() == '.') authority.remove_suffix(1);
  if (authority.empty()) unparsable("empty host");
  if (!std::all_of(authority.begin(), authority.end(), valid_host_char)) unparsable("bad host character");
  parts.host = lower(authority);
  for (auto label : labels_of(parts.host)) {
    if (label.empty()) unparsable("empty host label");
  }
  parts.tld = std::string(labels_of(parts.host).back());
  return parts;
}

// ---------------------------------------------------------------------------

PublicSuffixList PublicSuffixList::from_text(std::string_view text) {
  PublicSuffixList psl;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(line);
    if (t.empty() || t.substr(0, 2) == "//") continue;
    t = t.substr(0, t.find_first_of(" \t"));
    std::string rule = lower(t);
    if (rule.front() == '!') {
      psl.exceptions_.insert(rule.substr(1));
    } else if (rule.rfind("*.", 0) == 0) {
      psl.wildcards_.insert(rule.substr(2));
    } else {
      psl.rules_.insert(std::move(rule));
    }
  }
  return psl;
}

PublicSuffixList PublicSuffixList::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read public suffix list", file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string PublicSuffixList::public_suffix(std::string_view host) const {
  const auto labels = labels_of(host);
  const std::size_t n = labels.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (exceptions_.count(join_from(labels, i))) return join_from(labels, i + 1);
  }
  std::size_t best = n - 1;  // implicit "*" rule
  for (std::size_t i = 0; i < n; ++i) {
    const std::string candidate = join_from(labels, i);
    if (rules_.count(candidate)) best = std::min(best, i);
    if (i >= 1 && wildcards_.count(candidate)) best = std::min(best, i - 1);
  }
  return join_from(labels, best);
}

std::string PublicSuffixList::registrable_domain(std::string_view host) const {
  const auto labels = labels_of(host);
  const std::string suffix = public_suffix(host);
  const std::size_t suffix_labels = labels_of(suffix).size();
  if (suffix_labels >= labels.size()) return std::string(host);
  return join_from(labels, labels.size() - suffix_labels - 1);
}

DomainAllowlist DomainAllowlist::from_text(std::string_view text) {
  DomainAllowlist list;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    auto t = trim(std::string_view(line).substr(0, line.find('#')));
    if (!t.empty()) list.domains_.insert(lower(t));
  }
  return list;
}

DomainAllowlist DomainAllowlist::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot read domain allowlist", file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

bool DomainAllowlist::contains(std::string_view registrable_domain) const {
  return domains_.count(lower(registrable_domain)) > 0;
}

// ---------------------------------------------------------------------------

std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::High: return "High";
    case Tier::Medium: return "Medium";
    case Tier::Low: return "Low";
    case Tier::Invalid: return "Invalid";
  }
  return "Invalid";
}

ResourceEvaluator::ResourceEvaluator(PublicSuffixList suffixes, DomainAllowlist allowlist)
    : suffixes_(std::move(suffixes)), allowlist_(std::move(allowlist)) {}

UrlParts ResourceEvaluator::parse_url(std::string_view text) const {
  UrlParts parts = split_url(text);
  parts.registrable_domain = suffixes_.registrable_domain(parts.host);
  return parts;
}

ReliabilityAssessment ResourceEvaluator::score(const UrlParts& parts, std::string url) const {
  ReliabilityAssessment a;
  a.url = std::move(url);
  a.tier = Tier::Low;
  if (parts.tld == "edu") {
    a.tier = Tier::High;
    a.reasons.emplace_back(rule::kTldEdu);
  } else if (parts.tld == "gov") {
    a.tier = Tier::High;
    a.reasons.emplace_back(rule::kTldGov);
  }
  if (allowlist_.contains(parts.registrable_domain)) {
    if (a.tier == Tier::Low) a.tier = Tier::Medium;
    a.reasons.emplace_back(rule::kAllowlisted);
  }
  if (a.reasons.empty()) a.reasons.emplace_back(rule::kUnrecognized);
  if (parts.scheme == Scheme::Http) {
    a.tier = Tier::Low;
    a.reasons.emplace_back(rule::kHttpDowngrade);
  }
  return a;
}

namespace {

std::string rationale_system_message(const ReliabilityAssessment& a) {
  std::vector<std::string> reasons(a.reasons.begin(), a.reasons.end());
  return "Act as a writing coach helping a student judge the reliability of sources for an "
         "academic essay.\n\nThe reliability tier of this link has already been decided as " +
         std::string(tier_name(a.tier)) + " (rules: " + join_list(reasons) +
         "). Explain in two or three sentences of simple language why a source from this "
         "domain deserves that level of trust. Do not change, question or restate a different tier, "
         "and do not summarize or invent the page's content.";
}

}  // namespace

std::vector<ReliabilityAssessment> ResourceEvaluator::evaluate_all(const std::vector<std::string>& urls,
                                                                   LlmProvider* rationale_provider) const {
  std::vector<ReliabilityAssessment> out;
  out.reserve(urls.size());
  for (const auto& url : urls) {
    UrlParts parts;
    try {
      parts = parse_url(url);
    } catch (const Error&) {
      out.push_back({url, Tier::Invalid, {std::string(rule::kUnparsable)}, std::nullopt});
      continue;
    }
    auto assessment = score(parts, url);
    if (rationale_provider) {
      PromptBundle bundle{Stage::IdentifyingResources, rationale_system_message(assessment), {},
                          std::string(trim(url))};
      try {
        assessment.rationale = rationale_provider->complete(bundle, MemoryWindow{}).content;
      } catch (const Error&) {
        // rationale stays empty; the tier stands on its own
      }
    }
    out.push_back(std::move(assessment));
  }
  return out;
}

}  // namespace coach
