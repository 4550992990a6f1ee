#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "epss/corpus.hpp"
#include "epss/featurizer.hpp"
#include "epss/gbt.hpp"

namespace epss {

inline constexpr int kForwardWindowDays = 30;

/// True iff some activity day d satisfies as_of < d <= as_of + window.
/// Requires as_of + window <= activity window end (ground truth observable).
bool forward_window_label(const ActivityLog& activity, const std::string& cve_id, Date as_of,
                          int window = kForwardWindowDays);

/// A maximal run of consecutive days over which a CVE's features (modulo age)
/// do not change. The stored vector is the daily vector at span_start, so its
/// age entry is the age at the start of the span. exploited_days counts span
/// days whose forward 30-day window contains activity, making the row exactly
/// a weighted bundle of daily training examples.
struct TrainingRow {
    std::string cve_id;
    Date span_start;
    int exposure = 0;
    int exploited_days = 0;
    FeatureVector features;
};

struct SnapshotRow {
    std::string cve_id;
    FeatureVector features;
    bool label = false;
};

struct Snapshot {
    Date as_of;
    bool labeled = false;
    std::string dictionary_fingerprint;
    std::vector<SnapshotRow> rows;
};

/// Builds compressed training rows for all CVEs over
/// [max(published, horizon_start), horizon_end]. Output is ordered by
/// (cve_id, span_start) regardless of thread count.
/// Requires horizon_end + 30 <= activity window end.
std::vector<TrainingRow> build_training_rows(const FeatureExtractor& extractor,
                                             const ActivityLog& activity, Date horizon_start,
                                             Date horizon_end, int threads = 1);

/// One row per CVE published on or before as_of, features frozen at as_of.
/// When labeled, requires as_of + 30 <= activity window end.
Snapshot build_snapshot(const FeatureExtractor& extractor, const ActivityLog& activity,
                        Date as_of, bool labeled = true,
                        std::vector<std::string>* diagnostics = nullptr);

/// Weighted-bundle view of rows for training: one instance per row with
/// weight = exposure and positive mass = exploited_days.
std::vector<WeightedInstance> rows_to_instances(const std::vector<TrainingRow>& rows);

/// Unit-weight expansion of the same bundles: exposure instances per row,
/// exploited_days of them positive, all carrying the row's vector.
std::vector<WeightedInstance> rows_to_daily_instances(const std::vector<TrainingRow>& rows);

struct DailyExample {
    std::string cve_id;
    Date day;
    FeatureVector features;  // age entry reconstructed for the day
    bool label = false;
};

/// Expands rows back to the day-by-day (features, forward-label) table; age
/// is reconstructed from the span offset, labels recomputed from activity.
std::vector<DailyExample> expand_training_rows(const std::vector<TrainingRow>& rows,
                                               const ActivityLog& activity);

/// NDJSON serializations (header record first).
std::string serialize_rows(const std::vector<TrainingRow>& rows,
                           const std::string& dictionary_fingerprint);
std::vector<TrainingRow> parse_rows(const std::string& content,
                                    std::string* dictionary_fingerprint = nullptr);
std::string serialize_snapshot(const Snapshot& snapshot);
Snapshot parse_snapshot(const std::string& content);

}  // namespace epss
