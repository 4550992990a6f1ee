#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "epss/gbt.hpp"
#include "epss/labeler.hpp"

namespace epss {

enum class Horizon : int { m6 = 0, y1, y2, y3 };
int horizon_days(Horizon h);
const char* horizon_name(Horizon h);
std::optional<Horizon> horizon_from_name(const std::string& name);

struct ParamRange {
    double lo = 0.0;
    double hi = 0.0;
};

struct SearchSpace {
    ParamRange learning_rate{0.01, 0.3};
    ParamRange max_depth{3, 20};  // integer, rounded after stratification
    ParamRange subsample{0.5, 1.0};
    ParamRange gamma{0.0, 20.0};
    ParamRange max_delta_step{0.0, 2.0};
    ParamRange rounds{20, 100};  // integer
    std::vector<Horizon> horizons{Horizon::m6, Horizon::y1, Horizon::y2, Horizon::y3};

    void validate() const;
    bool contains(const BoostParams& p) const;
};

struct LhsPoint {
    BoostParams params;  // sampled dims substituted into a base configuration
    Horizon horizon = Horizon::y1;
};

/// Latin-Hypercube sample: each continuous dimension gets exactly one sample
/// per equal-probability stratum; integer dimensions are rounded after
/// stratification; the categorical horizon cycles through a permutation when
/// n exceeds its cardinality.
std::vector<LhsPoint> lhs_sample(const SearchSpace& space, int n, std::uint64_t seed,
                                 const BoostParams& base = BoostParams{});

/// Groups all rows of a CVE into one fold and stratifies on whether the CVE
/// has any exploited day, so each fold's exploited share is within one CVE of
/// the global share. Deterministic for a fixed seed.
std::map<std::string, int> stratified_folds(const std::vector<TrainingRow>& rows, int k,
                                            std::uint64_t seed);

struct TrialResult {
    BoostParams params;
    std::vector<double> fold_auc;
    double mean_auc = 0.0;
    double seconds = 0.0;
    bool failed = false;
    std::string note;
};

struct TuneOutcome {
    BoostParams best;
    TrialResult confirmation;
    std::vector<TrialResult> trials;
    double surrogate_fit_rmse = 0.0;
    std::vector<std::string> diagnostics;
};

using TrialObjective = std::function<TrialResult(const BoostParams&)>;

/// LHS trials scored by the objective, a squared-loss surrogate over the
/// trial results, and a surrogate-argmax refinement confirmed by one more
/// objective evaluation.
TuneOutcome tune_with_objective(const TrialObjective& objective, const SearchSpace& space,
                                int n_trials, std::uint64_t seed,
                                const BoostParams& base = BoostParams{});

/// Mean PR-AUC over stratified 5-fold CV; held-out rows are scored as the
/// daily bundles they compress (positive weight = exploited days).
double cv_mean_pr_auc(const std::vector<TrainingRow>& rows,
                      const std::map<std::string, int>& folds, int k, const BoostParams& params,
                      int threads, std::vector<double>* fold_aucs = nullptr);

/// Full tuning operation over training rows.
TuneOutcome tune(const std::vector<TrainingRow>& rows, const SearchSpace& space, int n_trials,
                 std::uint64_t seed, int threads = 1, const BoostParams& base = BoostParams{});

struct HorizonResult {
    Horizon horizon = Horizon::y1;
    bool skipped = false;
    std::string note;
    double auc = 0.0;
    std::size_t n_rows = 0;
};

/// Trains one model per horizon on rows from [as_of - horizon, as_of - 30d]
/// and evaluates PR-AUC on the as_of snapshot. Horizons reaching before the
/// activity window start are skipped with a note.
std::vector<HorizonResult> horizon_sweep(const FeatureExtractor& extractor,
                                         const ActivityLog& activity,
                                         const std::vector<Horizon>& horizons,
                                         const BoostParams& params, Date as_of, int threads = 1);

/// Delimited trial-log table (one row per trial plus the confirmation row).
std::string trial_log_tsv(const TuneOutcome& outcome);

}  // namespace epss
