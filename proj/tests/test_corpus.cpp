#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include <json.hpp>

#include "epss/corpus.hpp"
#include "epss/error.hpp"
#include "epss/rng.hpp"

using namespace epss;
using nlohmann::json;

namespace {

std::string vuln_line(const std::string& id, const std::string& published,
                      const std::string& extra = "") {
    std::string line = R"({"cve_id":")" + id + R"(","published":")" + published +
                       R"(","description":"a flaw")" + extra + "}";
    return line + "\n";
}

}  // namespace

TEST_CASE("three well-formed vulns parse with zero rejects") {
    std::string vulns = vuln_line("CVE-2022-1000", "2022-01-02") +
                        vuln_line("CVE-2022-1001", "2022-01-03") +
                        vuln_line("CVE-2022-1002", "2022-01-04");
    ParsedData data = parse_corpus(vulns, "", "", "");
    CHECK(data.corpus.size() == 3);
    CHECK(data.report.rejected.empty());
    CHECK(data.report.vulns_accepted == 3);
}

TEST_CASE("duplicate (cve, day) observations collapse to one entry") {
    std::string vulns = vuln_line("CVE-2022-1000", "2022-01-02");
    std::string obs =
        R"({"cve_id":"CVE-2022-1000","date":"2022-03-01"})" "\n"
        R"({"cve_id":"CVE-2022-1000","date":"2022-03-01","source":"other"})" "\n";
    ParsedData data = parse_corpus(vulns, obs, "", "");
    CHECK(data.activity.days("CVE-2022-1000").size() == 1);
    CHECK(data.report.observations_accepted == 1);
    CHECK(data.report.observations_deduplicated == 1);
}

TEST_CASE("fixture with planted malformed lines reports them by line number") {
    // 200 records, 7 planted malformed lines; the manifest of planted lines
    // is the oracle.
    std::set<std::size_t> planted = {13, 44, 71, 102, 145, 167, 199};
    std::string vulns;
    int next_id = 0;
    std::vector<std::string> breakages = {
        "{not json",
        R"({"cve_id":"NOT-AN-ID","published":"2022-01-01","description":"x"})",
        R"({"cve_id":"CVE-2022-9999","description":"missing published"})",
        R"({"cve_id":"CVE-2022-9998","published":"2022-13-01","description":"bad date"})",
        R"({"cve_id":"CVE-2022-9997","published":"2022-01-01","description":"bad cvss","cvss_v3":"AV:Z"})",
        R"({"cve_id":"CVE-2022-9996","published":"2022-01-01","description":"bad count","reference_count":-3})",
        R"({"cve_id":"CVE-2022-9995","published":"2022-01-01","description":"bad tag","reference_tags":{"Nonsense":1}})",
    };
    std::size_t breakage_index = 0;
    for (std::size_t i = 1; i <= 200; ++i) {
        if (planted.count(i)) {
            vulns += breakages[breakage_index++ % breakages.size()] + "\n";
        } else {
            char id[32];
            std::snprintf(id, sizeof(id), "CVE-2021-%04d", 1000 + next_id++);
            vulns += vuln_line(id, "2021-06-01");
        }
    }
    ParsedData data = parse_corpus(vulns, "", "", "");
    CHECK(data.corpus.size() == 193);
    REQUIRE(data.report.rejected.size() == 7);
    std::set<std::size_t> rejected_lines;
    for (const RejectedRecord& r : data.report.rejected) {
        CHECK(r.stream == "vulns");
        rejected_lines.insert(r.line);
    }
    CHECK(rejected_lines == planted);
}

TEST_CASE("strict mode aborts on the first malformed record") {
    ParseOptions strict;
    strict.strict = true;
    CHECK_THROWS_AS(parse_corpus("{broken\n", "", "", "", strict), ValidationError);
}

TEST_CASE("duplicate cve_id in the vuln stream aborts") {
    std::string vulns =
        vuln_line("CVE-2022-1000", "2022-01-02") + vuln_line("CVE-2022-1000", "2022-01-03");
    CHECK_THROWS_AS(parse_corpus(vulns, "", "", ""), ValidationError);
}

TEST_CASE("observations outside the configured window are skipped") {
    ParseOptions options;
    options.window_start = Date::from_civil(2022, 1, 1);
    options.window_end = Date::from_civil(2022, 12, 31);
    std::string obs =
        R"({"cve_id":"CVE-2022-1000","date":"2021-12-31"})" "\n"
        R"({"cve_id":"CVE-2022-1000","date":"2022-01-01"})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2021-01-01"), obs, "", "", options);
    CHECK(data.report.observations_accepted == 1);
    CHECK(data.activity.days("CVE-2022-1000").size() == 1);
}

TEST_CASE("observations for unknown CVEs are retained and flagged") {
    std::string obs = R"({"cve_id":"CVE-2022-2000","date":"2022-03-01"})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2022-01-01"), obs, "", "");
    CHECK(data.report.observations_unknown_cve == 1);
    CHECK(data.activity.days("CVE-2022-2000").size() == 1);  // retained
}

TEST_CASE("feed parsing validates the feed enum and dedups pairs") {
    std::string feeds =
        R"({"feed":"kev","cve_id":"CVE-2022-1000","date_added":"2022-05-01"})" "\n"
        R"({"feed":"kev","cve_id":"CVE-2022-1000","date_added":"2022-06-01"})" "\n"
        R"({"feed":"bogus","cve_id":"CVE-2022-1000"})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2022-01-01"), "", feeds, "");
    CHECK(data.report.feeds_accepted == 1);
    CHECK(data.report.rejected_in("feeds") == 1);
    // First record wins.
    CHECK(data.feeds.active("CVE-2022-1000", Feed::kev, Date::from_civil(2022, 5, 1)));
    CHECK(!data.feeds.active("CVE-2022-1000", Feed::kev, Date::from_civil(2022, 4, 30)));
}

TEST_CASE("feed without date_added is always present") {
    std::string feeds = R"({"feed":"metasploit","cve_id":"CVE-2022-1000"})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2022-01-01"), "", feeds, "");
    CHECK(data.feeds.active("CVE-2022-1000", Feed::metasploit, Date::from_civil(1990, 1, 1)));
}

TEST_CASE("tweet windows sum half-open (after, upto]") {
    std::string tweets =
        R"({"cve_id":"CVE-2022-1000","date":"2022-03-01","count":2})" "\n"
        R"({"cve_id":"CVE-2022-1000","date":"2022-03-05","count":3})" "\n"
        R"({"cve_id":"CVE-2022-1000","date":"2022-03-05","count":9})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2022-01-01"), "", "", tweets);
    CHECK(data.report.tweets_accepted == 2);  // duplicate (cve, date): first wins
    Date d = Date::from_civil(2022, 3, 5);
    CHECK(data.tweets.window_sum("CVE-2022-1000", d.minus_days(7), d) == 5);
    CHECK(data.tweets.window_sum("CVE-2022-1000", d.minus_days(1), d) == 3);
    // Day exactly `after` is excluded.
    CHECK(data.tweets.window_sum("CVE-2022-1000", d, d.plus_days(7)) == 0);
}

TEST_CASE("extract_vendors lowercases, dedups, and skips short URIs") {
    CHECK(extract_vendors({"cpe:2.3:a:Microsoft:word:1:*:*:*:*:*:*:*"}) ==
          std::vector<std::string>{"microsoft"});
    CHECK(extract_vendors({}).empty());

    std::vector<std::string> diagnostics;
    auto vendors = extract_vendors({"cpe:2.3", "cpe:2.3:a:acme:x", "cpe:2.3:o:ACME:y"},
                                   &diagnostics);
    CHECK(vendors == std::vector<std::string>{"acme"});
    CHECK(diagnostics.size() == 1);
}

TEST_CASE("vendor extraction invariant under ordering and duplication") {
    Rng rng(5);
    std::vector<std::string> uris;
    for (int i = 0; i < 50; ++i) {
        uris.push_back("cpe:2.3:a:vendor" + std::to_string(rng.below(12)) +
                       ":product:1:*:*:*:*:*:*:*");
    }
    auto base = extract_vendors(uris);
    std::vector<std::string> shuffled = uris;
    rng.shuffle(shuffled);
    shuffled.insert(shuffled.end(), uris.begin(), uris.end());  // duplicate everything
    CHECK(extract_vendors(shuffled) == base);
}

TEST_CASE("fixture list of 50 URIs spanning 12 vendors matches the manifest") {
    std::vector<std::string> uris;
    std::set<std::string> manifest;
    for (int i = 0; i < 50; ++i) {
        int vendor = i % 12;
        std::string name = "vendor" + std::to_string(vendor);
        manifest.insert(name);
        uris.push_back("cpe:2.3:a:" + name + ":p" + std::to_string(i) + ":*:*:*:*:*:*:*:*");
    }
    auto vendors = extract_vendors(uris);
    CHECK(std::set<std::string>(vendors.begin(), vendors.end()) == manifest);
    CHECK(vendors.size() == 12);
}

TEST_CASE("parsing is idempotent over the canonical serialization") {
    std::string vulns =
        vuln_line("CVE-2022-1000", "2022-01-02",
                  R"(,"cvss_v3":"AV:N/AC:L/PR:N/UI:N/S:U/C:H/I:H/A:H","cwes":["CWE-79"],)"
                  R"("cpe_uris":["cpe:2.3:a:acme:p:1:*:*:*:*:*:*:*"],"reference_count":4,)"
                  R"("reference_tags":{"Exploit":2},"keyword_tags":["web"])") +
        vuln_line("CVE-2022-1001", "2022-01-05", R"(,"cvss_v2":"AV:N/AC:L/Au:N/C:P/I:P/A:P")");
    std::string obs = R"({"cve_id":"CVE-2022-1000","date":"2022-02-01"})" "\n";
    std::string feeds = R"({"feed":"kev","cve_id":"CVE-2022-1000","date_added":"2022-03-01"})" "\n";
    std::string tweets = R"({"cve_id":"CVE-2022-1001","date":"2022-02-02","count":5})" "\n";
    ParseOptions options;
    options.window_start = Date::from_civil(2022, 1, 1);
    options.window_end = Date::from_civil(2022, 12, 31);

    ParsedData first = parse_corpus(vulns, obs, feeds, tweets, options);
    ParsedData second =
        parse_corpus(serialize_vulns(first.corpus), serialize_observations(first.activity),
                     serialize_feeds(first.feeds), serialize_tweets(first.tweets), options);
    CHECK(serialize_vulns(second.corpus) == serialize_vulns(first.corpus));
    CHECK(serialize_observations(second.activity) == serialize_observations(first.activity));
    CHECK(serialize_feeds(second.feeds) == serialize_feeds(first.feeds));
    CHECK(serialize_tweets(second.tweets) == serialize_tweets(first.tweets));
    CHECK(second.report.rejected.empty());
}

TEST_CASE("activity any_in uses the strictly-after convention") {
    std::string obs = R"({"cve_id":"CVE-2022-1000","date":"2022-03-10"})" "\n";
    ParsedData data = parse_corpus(vuln_line("CVE-2022-1000", "2022-01-01"), obs, "", "");
    Date activity_day = Date::from_civil(2022, 3, 10);
    CHECK(data.activity.any_in("CVE-2022-1000", activity_day.minus_days(1), activity_day));
    CHECK(!data.activity.any_in("CVE-2022-1000", activity_day, activity_day.plus_days(30)));
}
