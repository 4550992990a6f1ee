#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "epss/cvss.hpp"
#include "epss/date.hpp"

namespace epss {

/// The 16 NVD reference tags, plus a separate total-reference count.
inline constexpr int kReferenceTagCount = 16;
const std::array<std::string, kReferenceTagCount>& reference_tag_names();
int reference_tag_index(const std::string& name);  // -1 if unknown

/// The ten tracked feeds; first three publish exploit code, next three are
/// vulnerability lists, last four are offensive-security tools.
enum class Feed : int {
    exploitdb = 0,
    github_poc,
    metasploit,
    kev,
    google_project_zero,
    zdi,
    nuclei,
    jaeles,
    intrigue,
    sn1per,
};
inline constexpr int kFeedCount = 10;
const char* feed_name(Feed f);
std::optional<Feed> feed_from_name(const std::string& name);

struct VulnRecord {
    std::string cve_id;
    Date published;
    std::string description;
    std::optional<CvssV3Vector> cvss_v3;
    std::optional<CvssV2Vector> cvss_v2;
    std::vector<std::string> cwe_ids;      // sorted, unique
    std::vector<std::string> cpe_vendors;  // lowercase, sorted, unique
    std::array<std::int64_t, kReferenceTagCount> reference_tag_counts{};
    std::int64_t reference_count = 0;
    std::optional<std::vector<std::string>> keyword_tags;  // sorted, unique when present
};

/// Immutable set of vulnerability records, ordered by cve_id.
class VulnCorpus {
public:
    VulnCorpus() = default;
    explicit VulnCorpus(std::vector<VulnRecord> records);  // sorts; throws on duplicate id

    const std::vector<VulnRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    const VulnRecord* find(const std::string& cve_id) const;
    std::optional<std::size_t> index_of(const std::string& cve_id) const;

private:
    std::vector<VulnRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Per-CVE set of days with observed exploitation activity, within a window.
class ActivityLog {
public:
    ActivityLog() = default;
    ActivityLog(Date window_start, Date window_end)
        : window_start_(window_start), window_end_(window_end) {}

    Date window_start() const { return window_start_; }
    Date window_end() const { return window_end_; }

    /// Inserts an observation day (set semantics).
    void add(const std::string& cve_id, Date day);

    /// Sorted unique activity days for a CVE (empty if none).
    const std::vector<Date>& days(const std::string& cve_id) const;

    /// True iff some activity day d satisfies after < d <= upto.
    bool any_in(const std::string& cve_id, Date after, Date upto) const;

    std::size_t total_entries() const;
    std::vector<std::string> cve_ids_sorted() const;

private:
    Date window_start_{0};
    Date window_end_{0};
    std::unordered_map<std::string, std::vector<Date>> days_;
    mutable bool sorted_ = true;
    void ensure_sorted() const;
};

struct FeedEntry {
    Feed feed;
    std::optional<Date> date_added;  // absent = treated as always present
};

/// Feed memberships per CVE, deduplicated on (feed, cve).
class FeedTable {
public:
    /// Returns false if the (feed, cve) pair was already present.
    bool add(const std::string& cve_id, Feed feed, std::optional<Date> date_added);

    /// Membership effective at date d: date_added <= d, or no date recorded.
    bool active(const std::string& cve_id, Feed feed, Date d) const;

    const std::vector<FeedEntry>* entries(const std::string& cve_id) const;
    std::size_t size() const { return count_; }
    std::vector<std::string> cve_ids_sorted() const;

private:
    std::unordered_map<std::string, std::vector<FeedEntry>> by_cve_;
    std::size_t count_ = 0;
};

/// Daily original-tweet mention counts per CVE, with prefix sums for
/// half-open window queries.
class TweetTable {
public:
    /// Returns false if (cve, date) was already present (first record wins).
    bool add(const std::string& cve_id, Date date, std::int64_t count);

    /// Sum of counts over days in (after, upto].
    std::int64_t window_sum(const std::string& cve_id, Date after, Date upto) const;

    /// Dates where the window sum over a trailing window of length w can
    /// change for this CVE: each tweet day t contributes t and t+w.
    std::vector<Date> change_points(const std::string& cve_id, int window_days) const;

    std::size_t size() const { return count_; }
    std::vector<std::string> cve_ids_sorted() const;
    const std::vector<std::pair<Date, std::int64_t>>* days(const std::string& cve_id) const;

private:
    struct PerCve {
        std::vector<std::pair<Date, std::int64_t>> days;  // sorted by date
        std::vector<std::int64_t> prefix;                 // prefix[i] = sum of first i counts
        bool dirty = false;
    };
    mutable std::unordered_map<std::string, PerCve> by_cve_;
    std::size_t count_ = 0;
    static void refresh(PerCve& pc);
};

struct RejectedRecord {
    std::string stream;  // vulns | observations | feeds | tweets
    std::size_t line;    // 1-based
    std::string reason;
};

struct ParseReport {
    std::size_t vulns_accepted = 0;
    std::size_t observations_accepted = 0;
    std::size_t feeds_accepted = 0;
    std::size_t tweets_accepted = 0;
    std::size_t observations_deduplicated = 0;
    std::size_t observations_unknown_cve = 0;  // retained but flagged
    std::vector<RejectedRecord> rejected;
    std::vector<std::string> diagnostics;

    std::size_t rejected_in(const std::string& stream) const;
    std::string to_json() const;
};

struct ParseOptions {
    bool strict = false;  // malformed record aborts instead of skip+diagnostic
    std::optional<Date> window_start;
    std::optional<Date> window_end;
};

struct ParsedData {
    VulnCorpus corpus;
    ActivityLog activity;
    FeedTable feeds;
    TweetTable tweets;
    ParseReport report;
};

/// Parses the four newline-delimited record streams into the canonical data
/// model. Content strings hold entire files. If no window is configured, the
/// activity window is derived from min/max observation dates (diagnostic).
ParsedData parse_corpus(const std::string& vulns_content, const std::string& observations_content,
                        const std::string& feeds_content, const std::string& tweets_content,
                        const ParseOptions& options = {});

/// Vendor components of CPE 2.3 URIs, lowercased and deduplicated. URIs with
/// fewer than 4 colon-separated components are skipped with a diagnostic.
std::vector<std::string> extract_vendors(const std::vector<std::string>& cpe_uris,
                                         std::vector<std::string>* diagnostics = nullptr);

/// Canonical serializations (inverse of parse_corpus; stable orderings).
std::string serialize_vulns(const VulnCorpus& corpus);
std::string serialize_observations(const ActivityLog& activity);
std::string serialize_feeds(const FeedTable& feeds);
std::string serialize_tweets(const TweetTable& tweets);

}  // namespace epss
