#include "epss/labeler.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "epss/error.hpp"
#include "epss/io_util.hpp"
#include "epss/parallel.hpp"

namespace epss {

using nlohmann::json;

bool forward_window_label(const ActivityLog& activity, const std::string& cve_id, Date as_of,
                          int window) {
    if (as_of.plus_days(window) > activity.window_end())
        throw ValidationError("label not observable: " + as_of.to_string() + " + " +
                              std::to_string(window) + "d exceeds activity window end");
    return activity.any_in(cve_id, as_of, as_of.plus_days(window));
}

namespace {

struct Interval {
    std::int32_t begin;  // inclusive, days since epoch
    std::int32_t end;    // inclusive
};

// Days t whose forward window (t, t+30] contains activity: union over
// activity days a of [a-30, a-1], merged.
std::vector<Interval> positive_label_intervals(const std::vector<Date>& activity_days,
                                               int window) {
    std::vector<Interval> merged;
    for (Date a : activity_days) {
        std::int32_t begin = a.days_since_epoch() - window;
        std::int32_t end = a.days_since_epoch() - 1;
        if (!merged.empty() && begin <= merged.back().end + 1) {
            merged.back().end = std::max(merged.back().end, end);
        } else {
            merged.push_back({begin, end});
        }
    }
    return merged;
}

int overlap_days(const std::vector<Interval>& intervals, std::int32_t begin, std::int32_t end) {
    int days = 0;
    for (const Interval& iv : intervals) {
        std::int32_t lo = std::max(iv.begin, begin);
        std::int32_t hi = std::min(iv.end, end);
        if (lo <= hi) days += hi - lo + 1;
    }
    return days;
}

}  // namespace

std::vector<TrainingRow> build_training_rows(const FeatureExtractor& extractor,
                                             const ActivityLog& activity, Date horizon_start,
                                             Date horizon_end, int threads) {
    if (horizon_start > horizon_end)
        throw ValidationError("build_training_rows: horizon_start after horizon_end");
    if (horizon_end.plus_days(kForwardWindowDays) > activity.window_end())
        throw ValidationError(
            "build_training_rows: labels not observable through horizon_end + 30d");

    const VulnCorpus& corpus = extractor.corpus();
    const std::size_t n = corpus.size();
    std::vector<std::vector<TrainingRow>> per_cve(n);

    parallel_for(n, threads, [&](std::size_t ci) {
        const VulnRecord& rec = corpus.records()[ci];
        if (rec.published > horizon_end) return;  // no in-horizon days
        const Date start = std::max(rec.published, horizon_start);
        const Date end = horizon_end;

        // Dates where the daily vector can change (besides age): feed
        // additions and tweet-window boundaries.
        std::set<Date> breakpoints{start};
        if (const auto* entries = extractor.feeds().entries(rec.cve_id)) {
            for (const FeedEntry& e : *entries) {
                if (e.date_added && *e.date_added > start && *e.date_added <= end)
                    breakpoints.insert(*e.date_added);
            }
        }
        for (int w : kTweetWindows) {
            for (Date p : extractor.tweets().change_points(rec.cve_id, w)) {
                if (p > start && p <= end) breakpoints.insert(p);
            }
        }

        const auto intervals =
            positive_label_intervals(activity.days(rec.cve_id), kForwardWindowDays);

        std::vector<TrainingRow>& rows = per_cve[ci];
        std::vector<Date> starts(breakpoints.begin(), breakpoints.end());
        for (std::size_t s = 0; s < starts.size(); ++s) {
            Date span_start = starts[s];
            Date span_end = s + 1 < starts.size() ? starts[s + 1].minus_days(1) : end;
            FeatureVector features = extractor.featurize(ci, span_start);
            if (!rows.empty() &&
                rows.back().features.equal_ignoring(features, kAgeFeatureIndex)) {
                // The breakpoint over-approximated; extend the previous run.
                rows.back().exposure += span_end - span_start + 1;
                rows.back().exploited_days += overlap_days(
                    intervals, span_start.days_since_epoch(), span_end.days_since_epoch());
                continue;
            }
            TrainingRow row;
            row.cve_id = rec.cve_id;
            row.span_start = span_start;
            row.exposure = span_end - span_start + 1;
            row.exploited_days = overlap_days(intervals, span_start.days_since_epoch(),
                                              span_end.days_since_epoch());
            row.features = std::move(features);
            rows.push_back(std::move(row));
        }
    });

    std::vector<TrainingRow> rows;
    for (std::size_t ci = 0; ci < n; ++ci) {
        for (TrainingRow& row : per_cve[ci]) rows.push_back(std::move(row));
    }
    return rows;  // corpus order is sorted by cve_id; spans ascend within a CVE
}

Snapshot build_snapshot(const FeatureExtractor& extractor, const ActivityLog& activity,
                        Date as_of, bool labeled, std::vector<std::string>* diagnostics) {
    if (labeled && as_of.plus_days(kForwardWindowDays) > activity.window_end())
        throw ValidationError("build_snapshot: labels not observable at " + as_of.to_string());

    Snapshot snapshot;
    snapshot.as_of = as_of;
    snapshot.labeled = labeled;
    snapshot.dictionary_fingerprint = extractor.dictionary().fingerprint();

    const VulnCorpus& corpus = extractor.corpus();
    for (std::size_t ci = 0; ci < corpus.size(); ++ci) {
        const VulnRecord& rec = corpus.records()[ci];
        if (rec.published > as_of) continue;
        SnapshotRow row;
        row.cve_id = rec.cve_id;
        row.features = extractor.featurize(ci, as_of);
        if (labeled)
            row.label = activity.any_in(rec.cve_id, as_of, as_of.plus_days(kForwardWindowDays));
        snapshot.rows.push_back(std::move(row));
    }
    if (snapshot.rows.empty() && diagnostics)
        diagnostics->push_back("snapshot at " + as_of.to_string() +
                               " precedes every published CVE: empty snapshot");
    return snapshot;
}

std::vector<WeightedInstance> rows_to_instances(const std::vector<TrainingRow>& rows) {
    std::vector<WeightedInstance> instances;
    instances.reserve(rows.size());
    for (const TrainingRow& row : rows) {
        instances.push_back(WeightedInstance::from_counts(
            row.features, static_cast<double>(row.exploited_days),
            static_cast<double>(row.exposure)));
    }
    return instances;
}

std::vector<WeightedInstance> rows_to_daily_instances(const std::vector<TrainingRow>& rows) {
    std::vector<WeightedInstance> instances;
    for (const TrainingRow& row : rows) {
        for (int d = 0; d < row.exposure; ++d) {
            double label = d < row.exploited_days ? 1.0 : 0.0;
            instances.push_back(WeightedInstance::from_counts(row.features, label, 1.0));
        }
    }
    return instances;
}

std::vector<DailyExample> expand_training_rows(const std::vector<TrainingRow>& rows,
                                               const ActivityLog& activity) {
    std::vector<DailyExample> days;
    for (const TrainingRow& row : rows) {
        auto base_age = row.features.get(kAgeFeatureIndex);
        for (int offset = 0; offset < row.exposure; ++offset) {
            DailyExample ex;
            ex.cve_id = row.cve_id;
            ex.day = row.span_start.plus_days(offset);
            ex.features = row.features;
            if (base_age) ex.features.set(kAgeFeatureIndex, *base_age + offset);
            ex.label = forward_window_label(activity, row.cve_id, ex.day);
            days.push_back(std::move(ex));
        }
    }
    return days;
}

std::string serialize_rows(const std::vector<TrainingRow>& rows,
                           const std::string& dictionary_fingerprint) {
    std::string out;
    json header;
    header["type"] = "header";
    header["dictionary_fingerprint"] = dictionary_fingerprint;
    out += header.dump();
    out += '\n';
    for (const TrainingRow& row : rows) {
        json obj;
        obj["cve_id"] = row.cve_id;
        obj["span_start"] = row.span_start.to_string();
        obj["exposure"] = row.exposure;
        obj["exploited_days"] = row.exploited_days;
        obj["features"] = json::parse(row.features.to_json());
        out += obj.dump();
        out += '\n';
    }
    return out;
}

std::vector<TrainingRow> parse_rows(const std::string& content,
                                    std::string* dictionary_fingerprint) {
    std::vector<TrainingRow> rows;
    for (const std::string& line : split_lines(content)) {
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw Error("rows file: invalid json line");
        if (obj.value("type", "") == "header") {
            if (dictionary_fingerprint)
                *dictionary_fingerprint = obj.value("dictionary_fingerprint", "");
            continue;
        }
        TrainingRow row;
        row.cve_id = obj.at("cve_id").get<std::string>();
        auto d = Date::parse(obj.at("span_start").get<std::string>());
        if (!d) throw Error("rows file: invalid span_start");
        row.span_start = *d;
        row.exposure = obj.at("exposure").get<int>();
        row.exploited_days = obj.at("exploited_days").get<int>();
        row.features = FeatureVector::from_json(obj.at("features").dump());
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string serialize_snapshot(const Snapshot& snapshot) {
    std::string out;
    json header;
    header["type"] = "header";
    header["as_of"] = snapshot.as_of.to_string();
    header["labeled"] = snapshot.labeled;
    header["dictionary_fingerprint"] = snapshot.dictionary_fingerprint;
    out += header.dump();
    out += '\n';
    for (const SnapshotRow& row : snapshot.rows) {
        json obj;
        obj["cve_id"] = row.cve_id;
        if (snapshot.labeled) obj["label"] = row.label;
        obj["features"] = json::parse(row.features.to_json());
        out += obj.dump();
        out += '\n';
    }
    return out;
}

Snapshot parse_snapshot(const std::string& content) {
    Snapshot snapshot;
    bool have_header = false;
    for (const std::string& line : split_lines(content)) {
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw Error("snapshot file: invalid json line");
        if (obj.value("type", "") == "header") {
            auto d = Date::parse(obj.at("as_of").get<std::string>());
            if (!d) throw Error("snapshot file: invalid as_of");
            snapshot.as_of = *d;
            snapshot.labeled = obj.value("labeled", false);
            snapshot.dictionary_fingerprint = obj.value("dictionary_fingerprint", "");
            have_header = true;
            continue;
        }
        SnapshotRow row;
        row.cve_id = obj.at("cve_id").get<std::string>();
        row.label = obj.value("label", false);
        row.features = FeatureVector::from_json(obj.at("features").dump());
        snapshot.rows.push_back(std::move(row));
    }
    if (!have_header) throw Error("snapshot file: missing header record");
    return snapshot;
}

}  // namespace epss
