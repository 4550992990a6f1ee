#include "epss/tuner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>

#include "epss/error.hpp"
#include "epss/eval.hpp"
#include "epss/rng.hpp"

namespace epss {

int horizon_days(Horizon h) {
    switch (h) {
        case Horizon::m6: return 182;
        case Horizon::y1: return 365;
        case Horizon::y2: return 730;
        case Horizon::y3: return 1095;
    }
    return 365;
}

const char* horizon_name(Horizon h) {
    switch (h) {
        case Horizon::m6: return "6m";
        case Horizon::y1: return "1y";
        case Horizon::y2: return "2y";
        case Horizon::y3: return "3y";
    }
    return "1y";
}

std::optional<Horizon> horizon_from_name(const std::string& name) {
    for (Horizon h : {Horizon::m6, Horizon::y1, Horizon::y2, Horizon::y3}) {
        if (name == horizon_name(h)) return h;
    }
    return std::nullopt;
}

void SearchSpace::validate() const {
    for (const ParamRange* r :
         {&learning_rate, &max_depth, &subsample, &gamma, &max_delta_step, &rounds}) {
        if (!(r->lo <= r->hi)) throw ValidationError("search space: empty range");
    }
    if (!(learning_rate.lo > 0)) throw ValidationError("search space: learning_rate must be > 0");
    if (!(subsample.lo > 0) || subsample.hi > 1)
        throw ValidationError("search space: subsample must be within (0, 1]");
    if (max_depth.lo < 1 || rounds.lo < 1)
        throw ValidationError("search space: max_depth and rounds must be >= 1");
    if (horizons.empty()) throw ValidationError("search space: no horizons");
}

bool SearchSpace::contains(const BoostParams& p) const {
    auto in = [](double v, const ParamRange& r) { return v >= r.lo && v <= r.hi; };
    return in(p.learning_rate, learning_rate) && in(p.max_depth, max_depth) &&
           in(p.subsample, subsample) && in(p.gamma, gamma) &&
           in(p.max_delta_step, max_delta_step) && in(p.rounds, rounds);
}

namespace {

// One stratified column of the hypercube: n values, one per stratum, in a
// seeded random order with a uniform draw inside each stratum.
std::vector<double> lhs_column(const ParamRange& range, int n, Rng& rng) {
    std::vector<std::uint32_t> strata(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) strata[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(i);
    rng.shuffle(strata);
    std::vector<double> values(static_cast<std::size_t>(n));
    const double width = (range.hi - range.lo) / n;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        values[static_cast<std::size_t>(i)] =
            range.lo + (static_cast<double>(strata[static_cast<std::size_t>(i)]) + u) * width;
    }
    return values;
}

}  // namespace

std::vector<LhsPoint> lhs_sample(const SearchSpace& space, int n, std::uint64_t seed,
                                 const BoostParams& base) {
    space.validate();
    if (n < 1) throw ValidationError("lhs_sample: n must be >= 1");
    Rng rng(seed);
    const auto lr = lhs_column(space.learning_rate, n, rng);
    const auto depth = lhs_column(space.max_depth, n, rng);
    const auto subsample = lhs_column(space.subsample, n, rng);
    const auto gamma = lhs_column(space.gamma, n, rng);
    const auto mds = lhs_column(space.max_delta_step, n, rng);
    const auto rounds = lhs_column(space.rounds, n, rng);

    // Categorical horizon: permutation, cycled when n exceeds cardinality.
    std::vector<std::uint32_t> horizon_perm(space.horizons.size());
    for (std::size_t i = 0; i < horizon_perm.size(); ++i)
        horizon_perm[i] = static_cast<std::uint32_t>(i);
    rng.shuffle(horizon_perm);

    std::vector<LhsPoint> points;
    points.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        LhsPoint point;
        point.params = base;
        point.params.learning_rate = lr[static_cast<std::size_t>(i)];
        point.params.max_depth =
            static_cast<int>(std::llround(depth[static_cast<std::size_t>(i)]));
        point.params.subsample = subsample[static_cast<std::size_t>(i)];
        point.params.gamma = gamma[static_cast<std::size_t>(i)];
        point.params.max_delta_step = mds[static_cast<std::size_t>(i)];
        point.params.rounds =
            static_cast<int>(std::llround(rounds[static_cast<std::size_t>(i)]));
        point.horizon = space.horizons[horizon_perm[static_cast<std::size_t>(i) %
                                                    horizon_perm.size()]];
        points.push_back(point);
    }
    return points;
}

std::map<std::string, int> stratified_folds(const std::vector<TrainingRow>& rows, int k,
                                            std::uint64_t seed) {
    if (k < 2) throw ValidationError("stratified_folds: k must be >= 2");
    std::map<std::string, bool> exploited_by_cve;
    for (const TrainingRow& row : rows) {
        bool& flag = exploited_by_cve[row.cve_id];
        flag = flag || row.exploited_days > 0;
    }
    if (exploited_by_cve.size() < static_cast<std::size_t>(k))
        throw ValidationError("stratified_folds: fewer CVEs than folds");

    std::vector<std::string> positives, negatives;
    for (const auto& [cve, exploited] : exploited_by_cve)
        (exploited ? positives : negatives).push_back(cve);
    Rng rng_pos(derive_seed(seed, "folds.pos"));
    Rng rng_neg(derive_seed(seed, "folds.neg"));
    rng_pos.shuffle(positives);
    rng_neg.shuffle(negatives);

    // One round-robin cursor over positives then negatives keeps both the
    // fold sizes and the per-fold positive counts within one CVE of balance.
    std::map<std::string, int> fold_of;
    int cursor = 0;
    for (const std::string& cve : positives) {
        fold_of[cve] = cursor;
        cursor = (cursor + 1) % k;
    }
    for (const std::string& cve : negatives) {
        fold_of[cve] = cursor;
        cursor = (cursor + 1) % k;
    }
    return fold_of;
}

double cv_mean_pr_auc(const std::vector<TrainingRow>& rows,
                      const std::map<std::string, int>& folds, int k, const BoostParams& params,
                      int threads, std::vector<double>* fold_aucs) {
    if (fold_aucs) fold_aucs->clear();
    double sum = 0.0;
    for (int f = 0; f < k; ++f) {
        std::vector<WeightedInstance> train_set;
        std::vector<const TrainingRow*> held_out;
        for (const TrainingRow& row : rows) {
            if (folds.at(row.cve_id) == f) {
                held_out.push_back(&row);
            } else {
                train_set.push_back(WeightedInstance::from_counts(
                    row.features, static_cast<double>(row.exploited_days),
                    static_cast<double>(row.exposure)));
            }
        }
        if (train_set.empty() || held_out.empty())
            throw ValidationError("cv: empty fold " + std::to_string(f));
        BoostParams fold_params = params;
        fold_params.seed = derive_seed(params.seed, "cv.fold", static_cast<std::uint64_t>(f));
        Ensemble model = train(train_set, fold_params, "", threads);
        std::vector<WeightedScoreItem> items;
        items.reserve(held_out.size());
        for (const TrainingRow* row : held_out) {
            WeightedScoreItem item;
            item.score = model.predict_proba(row->features);
            item.positive_weight = static_cast<double>(row->exploited_days);
            item.negative_weight = static_cast<double>(row->exposure - row->exploited_days);
            items.push_back(item);
        }
        double auc = auc_pr(pr_curve_weighted(std::move(items)));
        if (fold_aucs) fold_aucs->push_back(auc);
        sum += auc;
    }
    return sum / k;
}

namespace {

// Surrogate feature layout over the six sampled dimensions.
FeatureVector params_to_surrogate_features(const BoostParams& p) {
    FeatureVector x;
    x.set(0, p.learning_rate);
    x.set(1, static_cast<double>(p.max_depth));
    x.set(2, p.subsample);
    x.set(3, p.gamma);
    x.set(4, p.max_delta_step);
    x.set(5, static_cast<double>(p.rounds));
    return x;
}

}  // namespace

TuneOutcome tune_with_objective(const TrialObjective& objective, const SearchSpace& space,
                                int n_trials, std::uint64_t seed, const BoostParams& base) {
    if (n_trials < 1) throw ValidationError("tune: n_trials must be >= 1");
    TuneOutcome outcome;
    const auto points = lhs_sample(space, n_trials, derive_seed(seed, "tune.lhs"), base);
    for (int i = 0; i < n_trials; ++i) {
        BoostParams params = points[static_cast<std::size_t>(i)].params;
        params.seed = derive_seed(seed, "tune.trial", static_cast<std::uint64_t>(i));
        auto start = std::chrono::steady_clock::now();
        TrialResult result;
        try {
            result = objective(params);
        } catch (const std::exception& e) {
            result.params = params;
            result.failed = true;
            result.note = e.what();
        }
        result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                             .count();
        outcome.trials.push_back(std::move(result));
    }

    std::vector<WeightedInstance> surrogate_data;
    for (const TrialResult& t : outcome.trials) {
        if (t.failed) continue;
        surrogate_data.push_back(
            WeightedInstance(params_to_surrogate_features(t.params), t.mean_auc, 1.0));
    }
    if (surrogate_data.empty()) {
        std::string detail;
        for (const TrialResult& t : outcome.trials) detail += " [" + t.note + "]";
        throw Error("tune: all trials failed:" + detail);
    }

    BoostParams surrogate_params;
    surrogate_params.objective = Objective::squared;
    surrogate_params.learning_rate = 0.1;
    surrogate_params.max_depth = 3;
    surrogate_params.subsample = 1.0;
    surrogate_params.gamma = 0.0;
    surrogate_params.max_delta_step = 0.0;
    surrogate_params.rounds = 80;
    surrogate_params.min_child_weight = 0.0;
    surrogate_params.seed = derive_seed(seed, "tune.surrogate");
    Ensemble surrogate = train(surrogate_data, surrogate_params);

    double fit_sse = 0.0;
    for (const WeightedInstance& inst : surrogate_data) {
        double err = surrogate.predict_margin(inst.features()) - inst.target();
        fit_sse += err * err;
    }
    outcome.surrogate_fit_rmse = std::sqrt(fit_sse / static_cast<double>(surrogate_data.size()));

    // Dense refinement scored by the surrogate; single confirmation run.
    const int refine_n = n_trials * 10;
    const auto refine = lhs_sample(space, refine_n, derive_seed(seed, "tune.refine"), base);
    int best_index = 0;
    double best_pred = -1e300;
    for (int i = 0; i < refine_n; ++i) {
        double pred = surrogate.predict_margin(
            params_to_surrogate_features(refine[static_cast<std::size_t>(i)].params));
        if (pred > best_pred) {
            best_pred = pred;
            best_index = i;
        }
    }
    BoostParams chosen = refine[static_cast<std::size_t>(best_index)].params;
    chosen.seed = derive_seed(seed, "tune.confirm");
    auto start = std::chrono::steady_clock::now();
    try {
        outcome.confirmation = objective(chosen);
    } catch (const std::exception& e) {
        outcome.confirmation.params = chosen;
        outcome.confirmation.failed = true;
        outcome.confirmation.note = e.what();
    }
    outcome.confirmation.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    outcome.best = chosen;
    outcome.diagnostics.push_back(
        "surrogate argmax predicted auc " + std::to_string(best_pred) + ", confirmed " +
        (outcome.confirmation.failed ? std::string("failed")
                                     : std::to_string(outcome.confirmation.mean_auc)));
    return outcome;
}

TuneOutcome tune(const std::vector<TrainingRow>& rows, const SearchSpace& space, int n_trials,
                 std::uint64_t seed, int threads, const BoostParams& base) {
    const int k = 5;
    const auto folds = stratified_folds(rows, k, derive_seed(seed, "tune.folds"));
    TrialObjective objective = [&](const BoostParams& params) {
        TrialResult result;
        result.params = params;
        result.mean_auc = cv_mean_pr_auc(rows, folds, k, params, threads, &result.fold_auc);
        return result;
    };
    return tune_with_objective(objective, space, n_trials, seed, base);
}

std::vector<HorizonResult> horizon_sweep(const FeatureExtractor& extractor,
                                         const ActivityLog& activity,
                                         const std::vector<Horizon>& horizons,
                                         const BoostParams& params, Date as_of, int threads) {
    std::vector<HorizonResult> results;
    Snapshot snapshot = build_snapshot(extractor, activity, as_of, true);
    for (Horizon h : horizons) {
        HorizonResult result;
        result.horizon = h;
        Date horizon_start = as_of.minus_days(horizon_days(h));
        Date horizon_end = as_of.minus_days(kForwardWindowDays);
        if (horizon_start < activity.window_start()) {
            result.skipped = true;
            result.note = "horizon extends before activity window start";
            results.push_back(result);
            continue;
        }
        try {
            auto rows = build_training_rows(extractor, activity, horizon_start, horizon_end,
                                            threads);
            result.n_rows = rows.size();
            if (rows.empty()) throw ValidationError("no training rows in horizon");
            auto instances = rows_to_instances(rows);
            BoostParams horizon_params = params;
            horizon_params.seed =
                derive_seed(params.seed, "sweep", static_cast<std::uint64_t>(horizon_days(h)));
            Ensemble model =
                train(instances, horizon_params, extractor.dictionary().fingerprint(), threads);
            std::vector<double> scores;
            std::vector<std::uint8_t> labels;
            for (const SnapshotRow& row : snapshot.rows) {
                scores.push_back(model.predict_proba(row.features));
                labels.push_back(row.label ? 1 : 0);
            }
            result.auc = auc_pr(pr_curve(scores, labels));
        } catch (const std::exception& e) {
            result.skipped = true;
            result.note = e.what();
        }
        results.push_back(result);
    }
    return results;
}

std::string trial_log_tsv(const TuneOutcome& outcome) {
    std::string out =
        "trial\tlearning_rate\tmax_depth\tsubsample\tgamma\tmax_delta_step\trounds";
    std::size_t max_folds = outcome.confirmation.fold_auc.size();
    for (const TrialResult& t : outcome.trials) max_folds = std::max(max_folds, t.fold_auc.size());
    for (std::size_t f = 0; f < max_folds; ++f) out += "\tfold" + std::to_string(f);
    out += "\tmean_auc\tseconds\tstatus\n";
    auto row = [&](const std::string& tag, const TrialResult& t) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%s\t%.6f\t%d\t%.6f\t%.6f\t%.6f\t%d", tag.c_str(),
                      t.params.learning_rate, t.params.max_depth, t.params.subsample,
                      t.params.gamma, t.params.max_delta_step, t.params.rounds);
        out += buf;
        for (std::size_t f = 0; f < max_folds; ++f) {
            if (f < t.fold_auc.size()) {
                std::snprintf(buf, sizeof(buf), "\t%.6f", t.fold_auc[f]);
                out += buf;
            } else {
                out += "\t";
            }
        }
        std::snprintf(buf, sizeof(buf), "\t%.6f\t%.3f\t%s\n", t.mean_auc, t.seconds,
                      t.failed ? ("failed: " + t.note).c_str() : "ok");
        out += buf;
    };
    for (std::size_t i = 0; i < outcome.trials.size(); ++i)
        row(std::to_string(i), outcome.trials[i]);
    row("confirm", outcome.confirmation);
    return out;
}

}  // namespace epss
