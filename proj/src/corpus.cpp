#include "epss/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <json.hpp>

#include "epss/error.hpp"
#include "epss/io_util.hpp"

namespace epss {

using nlohmann::json;

namespace {

const std::array<std::string, kReferenceTagCount> kReferenceTags = {
    "Vendor Advisory",      "Third Party Advisory", "Patch",
    "Exploit",              "VDB Entry",            "Issue Tracking",
    "Mailing List",         "US Government Resource", "Release Notes",
    "Permissions Required", "Broken Link",          "Product",
    "Mitigation",           "Technical Description", "Not Applicable",
    "Press/Media Coverage",
};

constexpr const char* kFeedNames[kFeedCount] = {
    "exploitdb", "github_poc", "metasploit",         "kev",   "google_project_zero",
    "zdi",       "nuclei",     "jaeles",             "intrigue", "sn1per",
};

bool valid_cve_id(const std::string& id) {
    // CVE-YYYY-NNNN+ (four-digit year, at least four digits of sequence).
    if (id.size() < 13 || id.compare(0, 4, "CVE-") != 0 || id[8] != '-') return false;
    for (int i = 4; i < 8; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
    }
    if (id.size() - 9 < 4) return false;
    for (std::size_t i = 9; i < id.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(id[i]))) return false;
    }
    return true;
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

struct LineError {
    std::string reason;
};

json parse_line(const std::string& line) {
    json obj = json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw LineError{"invalid json object"};
    return obj;
}

std::string require_string(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) throw LineError{std::string("missing field: ") + key};
    return it->get<std::string>();
}

Date require_date(const json& obj, const char* key) {
    auto parsed = Date::parse(require_string(obj, key));
    if (!parsed) throw LineError{std::string("invalid date in field: ") + key};
    return *parsed;
}

std::int64_t require_count(const json& obj, const char* key) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer())
        throw LineError{std::string("missing field: ") + key};
    std::int64_t v = it->get<std::int64_t>();
    if (v < 0) throw LineError{std::string("negative count in field: ") + key};
    return v;
}

VulnRecord parse_vuln(const json& obj) {
    VulnRecord rec;
    rec.cve_id = require_string(obj, "cve_id");
    if (!valid_cve_id(rec.cve_id)) throw LineError{"invalid cve_id: " + rec.cve_id};
    rec.published = require_date(obj, "published");
    rec.description = require_string(obj, "description");

    if (auto it = obj.find("cvss_v3"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw LineError{"cvss_v3 must be a string"};
        auto v = CvssV3Vector::parse(it->get<std::string>());
        if (!v) throw LineError{"invalid cvss_v3 vector"};
        rec.cvss_v3 = *v;
    }
    if (auto it = obj.find("cvss_v2"); it != obj.end() && !it->is_null()) {
        if (!it->is_string()) throw LineError{"cvss_v2 must be a string"};
        auto v = CvssV2Vector::parse(it->get<std::string>());
        if (!v) throw LineError{"invalid cvss_v2 vector"};
        rec.cvss_v2 = *v;
    }
    if (auto it = obj.find("cwes"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw LineError{"cwes must be an array"};
        std::vector<std::string> cwes;
        for (const auto& c : *it) {
            if (!c.is_string()) throw LineError{"cwes entries must be strings"};
            cwes.push_back(c.get<std::string>());
        }
        rec.cwe_ids = sorted_unique(std::move(cwes));
    }
    if (auto it = obj.find("cpe_uris"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw LineError{"cpe_uris must be an array"};
        std::vector<std::string> uris;
        for (const auto& u : *it) {
            if (!u.is_string()) throw LineError{"cpe_uris entries must be strings"};
            uris.push_back(u.get<std::string>());
        }
        rec.cpe_vendors = extract_vendors(uris);
    }
    if (auto it = obj.find("reference_tags"); it != obj.end() && !it->is_null()) {
        if (!it->is_object()) throw LineError{"reference_tags must be an object"};
        for (auto tag = it->begin(); tag != it->end(); ++tag) {
            int idx = reference_tag_index(tag.key());
            if (idx < 0) throw LineError{"unknown reference tag: " + tag.key()};
            if (!tag.value().is_number_integer() || tag.value().get<std::int64_t>() < 0)
                throw LineError{"reference tag count must be a non-negative integer"};
            rec.reference_tag_counts[static_cast<std::size_t>(idx)] =
                tag.value().get<std::int64_t>();
        }
    }
    if (obj.contains("reference_count") && !obj["reference_count"].is_null()) {
        rec.reference_count = require_count(obj, "reference_count");
    }
    if (auto it = obj.find("keyword_tags"); it != obj.end() && !it->is_null()) {
        if (!it->is_array()) throw LineError{"keyword_tags must be an array"};
        std::vector<std::string> tags;
        for (const auto& t : *it) {
            if (!t.is_string()) throw LineError{"keyword_tags entries must be strings"};
            tags.push_back(t.get<std::string>());
        }
        rec.keyword_tags = sorted_unique(std::move(tags));
    }
    return rec;
}

}  // namespace

const std::array<std::string, kReferenceTagCount>& reference_tag_names() { return kReferenceTags; }

int reference_tag_index(const std::string& name) {
    for (int i = 0; i < kReferenceTagCount; ++i) {
        if (kReferenceTags[static_cast<std::size_t>(i)] == name) return i;
    }
    return -1;
}

const char* feed_name(Feed f) { return kFeedNames[static_cast<int>(f)]; }

std::optional<Feed> feed_from_name(const std::string& name) {
    for (int i = 0; i < kFeedCount; ++i) {
        if (name == kFeedNames[i]) return static_cast<Feed>(i);
    }
    return std::nullopt;
}

VulnCorpus::VulnCorpus(std::vector<VulnRecord> records) : records_(std::move(records)) {
    std::sort(records_.begin(), records_.end(),
              [](const VulnRecord& a, const VulnRecord& b) { return a.cve_id < b.cve_id; });
    for (std::size_t i = 0; i < records_.size(); ++i) {
        if (i > 0 && records_[i].cve_id == records_[i - 1].cve_id)
            throw ValidationError("duplicate cve_id in vuln stream: " + records_[i].cve_id);
        by_id_.emplace(records_[i].cve_id, i);
    }
}

const VulnRecord* VulnCorpus::find(const std::string& cve_id) const {
    auto it = by_id_.find(cve_id);
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

std::optional<std::size_t> VulnCorpus::index_of(const std::string& cve_id) const {
    auto it = by_id_.find(cve_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

void ActivityLog::add(const std::string& cve_id, Date day) {
    days_[cve_id].push_back(day);
    sorted_ = false;
}

void ActivityLog::ensure_sorted() const {
    if (sorted_) return;
    for (auto& [id, days] : const_cast<ActivityLog*>(this)->days_) {
        std::sort(days.begin(), days.end());
        days.erase(std::unique(days.begin(), days.end()), days.end());
    }
    sorted_ = true;
}

const std::vector<Date>& ActivityLog::days(const std::string& cve_id) const {
    static const std::vector<Date> kEmpty;
    ensure_sorted();
    auto it = days_.find(cve_id);
    return it == days_.end() ? kEmpty : it->second;
}

bool ActivityLog::any_in(const std::string& cve_id, Date after, Date upto) const {
    const auto& d = days(cve_id);
    auto it = std::upper_bound(d.begin(), d.end(), after);
    return it != d.end() && *it <= upto;
}

std::size_t ActivityLog::total_entries() const {
    ensure_sorted();
    std::size_t n = 0;
    for (const auto& [id, days] : days_) n += days.size();
    return n;
}

std::vector<std::string> ActivityLog::cve_ids_sorted() const {
    std::vector<std::string> ids;
    ids.reserve(days_.size());
    for (const auto& [id, days] : days_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool FeedTable::add(const std::string& cve_id, Feed feed, std::optional<Date> date_added) {
    auto& entries = by_cve_[cve_id];
    for (const FeedEntry& e : entries) {
        if (e.feed == feed) return false;
    }
    entries.push_back({feed, date_added});
    ++count_;
    return true;
}

bool FeedTable::active(const std::string& cve_id, Feed feed, Date d) const {
    auto it = by_cve_.find(cve_id);
    if (it == by_cve_.end()) return false;
    for (const FeedEntry& e : it->second) {
        if (e.feed == feed) return !e.date_added || *e.date_added <= d;
    }
    return false;
}

const std::vector<FeedEntry>* FeedTable::entries(const std::string& cve_id) const {
    auto it = by_cve_.find(cve_id);
    return it == by_cve_.end() ? nullptr : &it->second;
}

std::vector<std::string> FeedTable::cve_ids_sorted() const {
    std::vector<std::string> ids;
    ids.reserve(by_cve_.size());
    for (const auto& [id, entries] : by_cve_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void TweetTable::refresh(PerCve& pc) {
    std::sort(pc.days.begin(), pc.days.end());
    pc.prefix.assign(pc.days.size() + 1, 0);
    for (std::size_t i = 0; i < pc.days.size(); ++i)
        pc.prefix[i + 1] = pc.prefix[i] + pc.days[i].second;
    pc.dirty = false;
}

bool TweetTable::add(const std::string& cve_id, Date date, std::int64_t count) {
    auto& pc = by_cve_[cve_id];
    for (const auto& [d, c] : pc.days) {
        if (d == date) return false;
    }
    pc.days.push_back({date, count});
    pc.dirty = true;
    ++count_;
    return true;
}

std::int64_t TweetTable::window_sum(const std::string& cve_id, Date after, Date upto) const {
    auto it = by_cve_.find(cve_id);
    if (it == by_cve_.end()) return 0;
    PerCve& pc = it->second;
    if (pc.dirty) refresh(pc);
    auto lo = std::upper_bound(pc.days.begin(), pc.days.end(), after,
                               [](Date d, const auto& e) { return d < e.first; });
    auto hi = std::upper_bound(pc.days.begin(), pc.days.end(), upto,
                               [](Date d, const auto& e) { return d < e.first; });
    return pc.prefix[static_cast<std::size_t>(hi - pc.days.begin())] -
           pc.prefix[static_cast<std::size_t>(lo - pc.days.begin())];
}

std::vector<Date> TweetTable::change_points(const std::string& cve_id, int window_days) const {
    std::vector<Date> points;
    auto it = by_cve_.find(cve_id);
    if (it == by_cve_.end()) return points;
    PerCve& pc = it->second;
    if (pc.dirty) refresh(pc);
    for (const auto& [d, c] : pc.days) {
        points.push_back(d);
        points.push_back(d.plus_days(window_days));
    }
    return points;
}

const std::vector<std::pair<Date, std::int64_t>>* TweetTable::days(
    const std::string& cve_id) const {
    auto it = by_cve_.find(cve_id);
    if (it == by_cve_.end()) return nullptr;
    if (it->second.dirty) refresh(it->second);
    return &it->second.days;
}

std::size_t ParseReport::rejected_in(const std::string& stream) const {
    std::size_t n = 0;
    for (const RejectedRecord& r : rejected) {
        if (r.stream == stream) ++n;
    }
    return n;
}

std::string ParseReport::to_json() const {
    json obj;
    obj["accepted"] = {{"vulns", vulns_accepted},
                       {"observations", observations_accepted},
                       {"feeds", feeds_accepted},
                       {"tweets", tweets_accepted}};
    obj["observations_deduplicated"] = observations_deduplicated;
    obj["observations_unknown_cve"] = observations_unknown_cve;
    json rej = json::array();
    for (const RejectedRecord& r : rejected)
        rej.push_back({{"stream", r.stream}, {"line", r.line}, {"reason", r.reason}});
    obj["rejected"] = rej;
    obj["diagnostics"] = diagnostics;
    return obj.dump(2);
}

namespace {

template <class Fn>
void for_each_record(const std::string& content, const char* stream, ParseReport& report,
                     bool strict, Fn&& fn) {
    std::vector<std::string> lines = split_lines(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        if (line.empty()) continue;
        try {
            fn(parse_line(line), i + 1);
        } catch (const LineError& e) {
            if (strict)
                throw ValidationError(std::string(stream) + " line " + std::to_string(i + 1) +
                                      ": " + e.reason);
            report.rejected.push_back({stream, i + 1, e.reason});
        }
    }
}

}  // namespace

ParsedData parse_corpus(const std::string& vulns_content, const std::string& observations_content,
                        const std::string& feeds_content, const std::string& tweets_content,
                        const ParseOptions& options) {
    ParsedData out;
    ParseReport& report = out.report;

    std::vector<VulnRecord> vulns;
    for_each_record(vulns_content, "vulns", report, options.strict,
                    [&](const json& obj, std::size_t) { vulns.push_back(parse_vuln(obj)); });
    out.corpus = VulnCorpus(std::move(vulns));  // throws on duplicate cve_id
    report.vulns_accepted = out.corpus.size();

    // Observation window: configured, or derived from the data.
    struct Obs {
        std::string cve;
        Date date;
        std::size_t line;
    };
    std::vector<Obs> observations;
    for_each_record(observations_content, "observations", report, options.strict,
                    [&](const json& obj, std::size_t line) {
                        Obs o;
                        o.cve = require_string(obj, "cve_id");
                        if (!valid_cve_id(o.cve)) throw LineError{"invalid cve_id: " + o.cve};
                        o.date = require_date(obj, "date");
                        if (obj.contains("source") && !obj["source"].is_null() &&
                            !obj["source"].is_string())
                            throw LineError{"source must be a string"};
                        o.line = line;
                        observations.push_back(o);
                    });

    Date window_start{0}, window_end{0};
    if (options.window_start && options.window_end) {
        window_start = *options.window_start;
        window_end = *options.window_end;
        if (window_end < window_start) throw ValidationError("window_end before window_start");
    } else if (!observations.empty()) {
        window_start = window_end = observations.front().date;
        for (const Obs& o : observations) {
            window_start = std::min(window_start, o.date);
            window_end = std::max(window_end, o.date);
        }
        report.diagnostics.push_back("activity window derived from observations: " +
                                     window_start.to_string() + ".." + window_end.to_string());
    }
    out.activity = ActivityLog(window_start, window_end);

    std::set<std::pair<std::string, std::int32_t>> seen_obs;
    std::set<std::string> unknown_cves;
    for (const Obs& o : observations) {
        if (o.date < window_start || o.date > window_end) {
            report.diagnostics.push_back("observations line " + std::to_string(o.line) +
                                         ": date outside window, skipped");
            continue;
        }
        if (!seen_obs.insert({o.cve, o.date.days_since_epoch()}).second) {
            ++report.observations_deduplicated;
            continue;
        }
        if (!out.corpus.find(o.cve)) unknown_cves.insert(o.cve);
        out.activity.add(o.cve, o.date);
        ++report.observations_accepted;
    }
    report.observations_unknown_cve = unknown_cves.size();
    if (!unknown_cves.empty()) {
        report.diagnostics.push_back(
            "observations reference " + std::to_string(unknown_cves.size()) +
            " CVE id(s) absent from the vuln stream (retained, flagged)");
    }

    for_each_record(
        feeds_content, "feeds", report, options.strict, [&](const json& obj, std::size_t line) {
            std::string feed_str = require_string(obj, "feed");
            auto feed = feed_from_name(feed_str);
            if (!feed) throw LineError{"unknown feed: " + feed_str};
            std::string cve = require_string(obj, "cve_id");
            if (!valid_cve_id(cve)) throw LineError{"invalid cve_id: " + cve};
            std::optional<Date> added;
            if (obj.contains("date_added") && !obj["date_added"].is_null())
                added = require_date(obj, "date_added");
            if (!out.feeds.add(cve, *feed, added)) {
                report.diagnostics.push_back("feeds line " + std::to_string(line) +
                                             ": duplicate (feed, cve_id), first record kept");
            } else {
                ++report.feeds_accepted;
            }
        });

    for_each_record(tweets_content, "tweets", report, options.strict,
                    [&](const json& obj, std::size_t line) {
                        std::string cve = require_string(obj, "cve_id");
                        if (!valid_cve_id(cve)) throw LineError{"invalid cve_id: " + cve};
                        Date date = require_date(obj, "date");
                        std::int64_t count = require_count(obj, "count");
                        if (!out.tweets.add(cve, date, count)) {
                            report.diagnostics.push_back(
                                "tweets line " + std::to_string(line) +
                                ": duplicate (cve_id, date), first record kept");
                        } else {
                            ++report.tweets_accepted;
                        }
                    });

    return out;
}

std::vector<std::string> extract_vendors(const std::vector<std::string>& cpe_uris,
                                         std::vector<std::string>* diagnostics) {
    std::vector<std::string> vendors;
    for (const std::string& uri : cpe_uris) {
        // cpe:2.3:part:vendor:product:... — vendor is the 4th component.
        std::vector<std::string> parts;
        std::size_t pos = 0;
        while (parts.size() < 5 && pos <= uri.size()) {
            std::size_t colon = uri.find(':', pos);
            if (colon == std::string::npos) {
                parts.push_back(uri.substr(pos));
                break;
            }
            parts.push_back(uri.substr(pos, colon - pos));
            pos = colon + 1;
        }
        if (parts.size() < 4) {
            if (diagnostics)
                diagnostics->push_back("cpe uri with fewer than 4 components skipped: " + uri);
            continue;
        }
        std::string vendor = parts[3];
        std::transform(vendor.begin(), vendor.end(), vendor.begin(),
                       [](unsigned char c) { return std::tolower(c); });
        vendors.push_back(std::move(vendor));
    }
    return sorted_unique(std::move(vendors));
}

std::string serialize_vulns(const VulnCorpus& corpus) {
    std::string out;
    for (const VulnRecord& rec : corpus.records()) {
        json obj;
        obj["cve_id"] = rec.cve_id;
        obj["published"] = rec.published.to_string();
        obj["description"] = rec.description;
        if (rec.cvss_v3) obj["cvss_v3"] = rec.cvss_v3->to_string();
        if (rec.cvss_v2) obj["cvss_v2"] = rec.cvss_v2->to_string();
        if (!rec.cwe_ids.empty()) obj["cwes"] = rec.cwe_ids;
        if (!rec.cpe_vendors.empty()) {
            // Canonical form carries vendors as already-extracted CPE stubs.
            std::vector<std::string> uris;
            for (const std::string& v : rec.cpe_vendors)
                uris.push_back("cpe:2.3:a:" + v + ":*:*:*:*:*:*:*:*:*");
            obj["cpe_uris"] = uris;
        }
        json tags = json::object();
        for (int i = 0; i < kReferenceTagCount; ++i) {
            if (rec.reference_tag_counts[static_cast<std::size_t>(i)] > 0)
                tags[reference_tag_names()[static_cast<std::size_t>(i)]] =
                    rec.reference_tag_counts[static_cast<std::size_t>(i)];
        }
        if (!tags.empty()) obj["reference_tags"] = tags;
        if (rec.reference_count > 0) obj["reference_count"] = rec.reference_count;
        if (rec.keyword_tags) obj["keyword_tags"] = *rec.keyword_tags;
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::string serialize_observations(const ActivityLog& activity) {
    std::string out;
    for (const std::string& cve : activity.cve_ids_sorted()) {
        for (Date d : activity.days(cve)) {
            json obj;
            obj["cve_id"] = cve;
            obj["date"] = d.to_string();
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

std::string serialize_feeds(const FeedTable& feeds) {
    std::string out;
    for (const std::string& cve : feeds.cve_ids_sorted()) {
        const auto* entries = feeds.entries(cve);
        std::vector<FeedEntry> sorted = *entries;
        std::sort(sorted.begin(), sorted.end(),
                  [](const FeedEntry& a, const FeedEntry& b) { return a.feed < b.feed; });
        for (const FeedEntry& e : sorted) {
            json obj;
            obj["feed"] = feed_name(e.feed);
            obj["cve_id"] = cve;
            if (e.date_added) obj["date_added"] = e.date_added->to_string();
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

std::string serialize_tweets(const TweetTable& tweets) {
    std::string out;
    for (const std::string& cve : tweets.cve_ids_sorted()) {
        for (const auto& [date, count] : *tweets.days(cve)) {
            json obj;
            obj["cve_id"] = cve;
            obj["date"] = date.to_string();
            obj["count"] = count;
            out += obj.dump();
            out += '\n';
        }
    }
    return out;
}

std::vector<std::string> TweetTable::cve_ids_sorted() const {
    std::vector<std::string> ids;
    ids.reserve(by_cve_.size());
    for (const auto& [id, pc] : by_cve_) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace epss
