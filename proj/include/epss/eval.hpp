#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "epss/labeler.hpp"

namespace epss {

struct PrPoint {
    double threshold = 0.0;  // selection = items with score >= threshold
    double tp = 0.0;
    double fp = 0.0;
    double fn = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double effort = 0.0;  // (tp + fp) / universe
};

struct PRCurve {
    std::vector<PrPoint> points;  // one per distinct score, descending threshold
    double universe = 0.0;
    double positives = 0.0;
};

/// Item with mass split between positive and negative labels. The unweighted
/// curve is the special case (1,0)/(0,1); compressed rows evaluate as the
/// daily bundles they stand for.
struct WeightedScoreItem {
    double score = 0.0;
    double positive_weight = 0.0;
    double negative_weight = 0.0;
};

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
PRCurve pr_curve_weighted(std::vector<WeightedScoreItem> items);

/// Trapezoidal area of precision over recall, anchored at
/// (recall 0, precision of the highest-threshold point).
double auc_pr(const PRCurve& curve);

struct BestF1 {
    double threshold = 0.0;
    double f1 = 0.0;
    double efficiency = 0.0;  // precision
    double coverage = 0.0;    // recall
    double effort = 0.0;
};

/// Maximizes F1 over curve points; ties go to the higher threshold.
BestF1 best_f1(const PRCurve& curve);

double brier(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct CalibrationBin {
    double lower = 0.0;  // score range covered by the bin
    double upper = 0.0;
    double mean_predicted = 0.0;
    double observed_rate = 0.0;
    std::size_t count = 0;
};

enum class BinScheme { quantile, width };

struct CalibrationReport {
    std::vector<CalibrationBin> bins;
    double brier = 0.0;
};

CalibrationReport calibration_bins(std::span<const double> scores,
                                   std::span<const std::uint8_t> labels, int bins = 10,
                                   BinScheme scheme = BinScheme::quantile);

struct StrategyOutcome {
    std::string strategy;
    std::size_t selected = 0;
    std::size_t exploited = 0;
    std::size_t tp = 0;
    double efficiency = 0.0;  // tp / selected (0 when nothing selected)
    double coverage = 0.0;    // tp / exploited (0 when nothing exploited)
    double effort = 0.0;      // selected / universe
};

/// Exact set arithmetic. selection and exploited must be subsets of universe.
StrategyOutcome evaluate_strategy(const std::string& name,
                                  const std::vector<std::string>& selection,
                                  const std::vector<std::string>& exploited,
                                  const std::vector<std::string>& universe);

/// Largest selection (lowest threshold) whose effort does not exceed target.
double threshold_for_effort(std::span<const double> scores, std::size_t universe,
                            double target_effort);

/// Minimal-effort threshold achieving coverage >= target.
double threshold_for_coverage(std::span<const double> scores,
                              std::span<const std::uint8_t> labels, double target_coverage);

/// A remediation strategy: select by a feature value, feed membership, or a
/// score threshold.
struct StrategySpec {
    std::string name;
    std::optional<std::string> feature;  // dictionary feature name
    double feature_value = 1.0;
    std::optional<Feed> feed;
    std::optional<double> score_ge;
};

/// The six heuristic strategies studied in the remediation comparison.
std::vector<StrategySpec> builtin_strategies();

/// Evaluates strategies over a labeled snapshot. Score-threshold strategies
/// require `scores` (aligned with snapshot rows).
std::vector<StrategyOutcome> run_strategies(const std::vector<StrategySpec>& specs,
                                            const Snapshot& snapshot,
                                            const FeatureExtractor& extractor,
                                            std::span<const double> scores = {});

}  // namespace epss
