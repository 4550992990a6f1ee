#pragma once

// Independent reference implementations used as test oracles. Everything here
// recomputes results by direct enumeration, deliberately sharing no code with
// the library paths it checks.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "epss/corpus.hpp"
#include "epss/explain.hpp"
#include "epss/featurizer.hpp"
#include "epss/gbt.hpp"
#include "epss/labeler.hpp"

namespace epss::oracle {

/// Day-by-day (features, forward-label) table built by brute force: one full
/// featurize call and one label scan per CVE per day.
std::vector<DailyExample> naive_daily_table(const FeatureExtractor& extractor,
                                            const ActivityLog& activity, Date horizon_start,
                                            Date horizon_end);

/// Row compression done the slow way on top of the naive daily table.
std::vector<TrainingRow> naive_training_rows(const FeatureExtractor& extractor,
                                             const ActivityLog& activity, Date horizon_start,
                                             Date horizon_end);

/// Expected tree value with coalition S "known": features in S route as the
/// prediction would; all others are marginalized by child covers.
double subset_value(const Tree& tree, const FeatureVector& x,
                    const std::vector<std::uint32_t>& coalition);

/// Exact Shapley values by subset enumeration over the features appearing in
/// the tree (exponential; keep trees small).
std::map<std::uint32_t, double> brute_force_shap(const Tree& tree, const FeatureVector& x);

struct RefPrPoint {
    double threshold;
    double tp, fp, fn, precision, recall;
};

/// Precision-recall reference by exhaustive re-count at every distinct score.
std::vector<RefPrPoint> scan_pr_points(std::span<const double> scores,
                                       std::span<const std::uint8_t> labels);
double scan_pr_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);
RefPrPoint scan_best_f1(std::span<const double> scores, std::span<const std::uint8_t> labels,
                        double* best_f1_out);

/// Scalar trace of boosting when one binary feature splits the data into two
/// pure groups: returns the final probabilities (positive group, negative
/// group) after `rounds` Newton steps mirroring the stated update rule.
std::pair<double, double> two_group_boost_trace(double pos_weight, double neg_weight,
                                                int rounds, const BoostParams& params);

/// Deterministic scripted fixture: n CVEs with assorted static attributes,
/// feed-addition events, tweets, and activity days. Used by the labeler and
/// acceptance tests.
struct ScriptedFixture {
    ParsedData data;
    Date window_start;
    Date window_end;
    Date horizon_start;
    Date horizon_end;
};
ScriptedFixture scripted_fixture(int n_cves, std::uint64_t seed);

}  // namespace epss::oracle
