#include <doctest.h>

#include "support.hpp"

using namespace coach;

namespace {

int rank(Tier t) {
  switch (t) {
    case Tier::High: return 3;
    case Tier::Medium: return 2;
    case Tier::Low: return 1;
    case Tier::Invalid: return 0;
  }
  return 0;
}

std::string with_scheme(const std::string& url, const std::string& scheme) {
  auto t = url.find("://");
  return scheme + url.substr(t);
}

/// Records the tier each rationale request was told about.
class RationaleProvider final : public LlmProvider {
 public:
  LlmResponse complete(const PromptBundle& b, const MemoryWindow&) override {
    systems.push_back(b.system_message);
    if (b.user_message.find("fail") != std::string::npos) throw Error(ErrorCode::ProviderUnavailable, "down");
    return {"Because of its domain.", {}, 1};
  }
  std::vector<std::string> systems;
};

}  // namespace

TEST_CASE("parse_url") {
  const auto& ev = testing::evaluator();
  auto p = ev.parse_url("https://www.nih.gov/news");
  CHECK(p.scheme == Scheme::Https);
  CHECK(p.host == "www.nih.gov");
  CHECK(p.tld == "gov");
  CHECK(p.registrable_domain == "nih.gov");
  CHECK(p.path == "/news");

  auto q = ev.parse_url("  HTTP://User@WWW.Example.CO.UK:8080/a/b?c#d ");
  CHECK(q.scheme == Scheme::Http);
  CHECK(q.host == "www.example.co.uk");
  CHECK(q.registrable_domain == "example.co.uk");
  CHECK(q.tld == "uk");
  CHECK(q.path == "/a/b?c#d");

  for (const char* bad : {"ftp://x.org/a", "not a url", "https://", "https://a..b/", "javascript://x"}) {
    CAPTURE(bad);
    try {
      ev.parse_url(bad);
      FAIL("expected UnparsableUrl");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::UnparsableUrl);
    }
  }
}

TEST_CASE("public suffix rules") {
  auto psl = PublicSuffixList::from_text(
      "// comment\ncom\nuk\nco.uk\n*.ck\n!www.ck\njp\nkawasaki.jp\n*.kawasaki.jp\n!city.kawasaki.jp\n");
  CHECK(psl.registrable_domain("a.b.example.com") == "example.com");
  CHECK(psl.registrable_domain("x.example.co.uk") == "example.co.uk");
  CHECK(psl.registrable_domain("a.b.c.ck") == "b.c.ck");
  CHECK(psl.registrable_domain("www.ck") == "www.ck");
  CHECK(psl.registrable_domain("a.www.ck") == "www.ck");
  CHECK(psl.registrable_domain("x.city.kawasaki.jp") == "city.kawasaki.jp");
  CHECK(psl.registrable_domain("a.b.kawasaki.jp") == "a.b.kawasaki.jp");
  CHECK(psl.registrable_domain("unknown.tld") == "unknown.tld");
  CHECK(psl.public_suffix("foo.co.uk") == "co.uk");

  const auto full = PublicSuffixList::load(testing::data_dir() / "public_suffix_list.dat");
  CHECK(full.size() > 5000);
  CHECK(full.registrable_domain("someone.github.io") == "someone.github.io");
  CHECK(full.registrable_domain("www.city.kawasaki.jp") == "city.kawasaki.jp");
}

TEST_CASE("allowlist file") {
  auto list = DomainAllowlist::from_text("# heading\nwikipedia.org  # trailing\n\n  BBC.co.uk\n");
  CHECK(list.size() == 2);
  CHECK(list.contains("wikipedia.org"));
  CHECK(list.contains("bbc.co.uk"));
  CHECK_FALSE(list.contains("heading"));
  auto shipped = DomainAllowlist::load(testing::data_dir() / "allowlist.txt");
  CHECK(shipped.size() >= 20);
  const auto psl = PublicSuffixList::load(testing::data_dir() / "public_suffix_list.dat");
  // Entries are registrable domains, otherwise they could never match.
  for (const char* d : {"wikipedia.org", "bbc.co.uk", "reuters.com", "who.int"}) {
    CHECK(shipped.contains(d));
    CHECK(psl.registrable_domain(d) == d);
  }
}

TEST_CASE("score examples") {
  const auto& ev = testing::evaluator();
  auto unc = ev.score(ev.parse_url("https://writingcenter.unc.edu/tips"));
  CHECK(unc.tier == Tier::High);
  CHECK(unc.reasons == std::vector<std::string>{"tld_edu"});
  auto down = ev.score(ev.parse_url("http://example.edu/a"));
  CHECK(down.tier == Tier::Low);
  CHECK(down.reasons == std::vector<std::string>{"tld_edu", "http_downgrade"});
  CHECK(ev.score(ev.parse_url("https://randomblog.example")).tier == Tier::Low);
}

TEST_CASE("tier fixture table") {
  const auto table = testing::read_json(testing::golden_dir() / "url_tiers.json");
  REQUIRE(table.size() >= 20);
  std::vector<std::string> urls;
  for (const auto& row : table) urls.push_back(row.at("url"));
  auto got = testing::evaluator().evaluate_all(urls, nullptr);
  REQUIRE(got.size() == table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CAPTURE(urls[i]);
    CHECK(got[i].url == urls[i]);
    CHECK(tier_name(got[i].tier) == table[i].at("tier").get<std::string>());
    CHECK(got[i].reasons == table[i].at("reasons").get<std::vector<std::string>>());
    CHECK_FALSE(got[i].rationale.has_value());
  }
}

TEST_CASE("https to http never raises the tier; path never matters") {
  const auto& ev = testing::evaluator();
  const auto table = testing::read_json(testing::golden_dir() / "url_tiers.json");
  for (const auto& row : table) {
    const std::string url = row.at("url");
    UrlParts parts;
    try {
      parts = ev.parse_url(url);
    } catch (const Error&) {
      continue;
    }
    const std::string trimmed = url.substr(url.find_first_not_of(' '));
    auto https = ev.score(ev.parse_url(with_scheme(trimmed, "https")));
    auto http = ev.score(ev.parse_url(with_scheme(trimmed, "http")));
    CHECK(rank(http.tier) <= rank(https.tier));
    CHECK(http.tier == Tier::Low);

    UrlParts other = parts;
    other.path = "/completely/different?x=1";
    CHECK(ev.score(other).tier == ev.score(parts).tier);
    CHECK(ev.score(other).reasons == ev.score(parts).reasons);
  }
}

TEST_CASE("evaluate_all") {
  const auto& ev = testing::evaluator();
  auto two = ev.evaluate_all({"https://a.gov", "bad"}, nullptr);
  REQUIRE(two.size() == 2);
  CHECK(two[0].tier == Tier::High);
  CHECK(two[1].tier == Tier::Invalid);
  CHECK(ev.evaluate_all({}, nullptr).empty());

  const std::vector<std::string> five = {"https://en.wikipedia.org/x", "nope", "https://x.edu", "http://x.edu",
                                         "https://blog.example.com"};
  auto r = ev.evaluate_all(five, nullptr);
  REQUIRE(r.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(r[i].url == five[i]);
  CHECK(r[0].tier == Tier::Medium);
  CHECK(r[2].tier == Tier::High);
  CHECK(r[3].tier == Tier::Low);

  RationaleProvider provider;
  auto with = ev.evaluate_all({"https://x.edu/a", "bad", "https://fail.example.com"}, &provider);
  REQUIRE(with.size() == 3);
  CHECK(with[0].tier == Tier::High);
  CHECK(with[0].rationale == "Because of its domain.");
  CHECK_FALSE(with[1].rationale.has_value());
  CHECK(with[2].tier == Tier::Low);
  CHECK_FALSE(with[2].rationale.has_value());
  // Invalid entries are not sent; the tier is stated in the prompt.
  REQUIRE(provider.systems.size() == 2);
  CHECK(provider.systems[0].find("High") != std::string::npos);
  CHECK(provider.systems[1].find("Low") != std::string::npos);
}
