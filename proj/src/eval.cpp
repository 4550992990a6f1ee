#include "epss/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "epss/error.hpp"

namespace epss {

PRCurve pr_curve_weighted(std::vector<WeightedScoreItem> items) {
    double positives = 0.0, total = 0.0;
    for (const WeightedScoreItem& item : items) {
        if (!std::isfinite(item.score)) throw ValidationError("pr_curve: non-finite score");
        positives += item.positive_weight;
        total += item.positive_weight + item.negative_weight;
    }
    if (!(positives > 0)) throw ValidationError("pr_curve: undefined recall (zero positives)");

    std::sort(items.begin(), items.end(),
              [](const WeightedScoreItem& a, const WeightedScoreItem& b) {
                  return a.score > b.score;
              });

    PRCurve curve;
    curve.universe = total;
    curve.positives = positives;
    double tp = 0.0, selected = 0.0;
    std::size_t i = 0;
    while (i < items.size()) {
        const double threshold = items[i].score;
        // Ties share a threshold: absorb the whole equal-score run.
        while (i < items.size() && items[i].score == threshold) {
            tp += items[i].positive_weight;
            selected += items[i].positive_weight + items[i].negative_weight;
            ++i;
        }
        PrPoint p;
        p.threshold = threshold;
        p.tp = tp;
        p.fp = selected - tp;
        p.fn = positives - tp;
        p.precision = selected > 0 ? tp / selected : 0.0;
        p.recall = tp / positives;
        p.effort = total > 0 ? selected / total : 0.0;
        curve.points.push_back(p);
    }
    return curve;
}

PRCurve pr_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ValidationError("pr_curve: size mismatch");
    std::vector<WeightedScoreItem> items(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        items[i].score = scores[i];
        items[i].positive_weight = labels[i] ? 1.0 : 0.0;
        items[i].negative_weight = labels[i] ? 0.0 : 1.0;
    }
    return pr_curve_weighted(std::move(items));
}

double auc_pr(const PRCurve& curve) {
    if (curve.points.empty()) return 0.0;
    double area = 0.0;
    double prev_recall = 0.0;
    double prev_precision = curve.points.front().precision;
    for (const PrPoint& p : curve.points) {
        area += (p.recall - prev_recall) * 0.5 * (p.precision + prev_precision);
        prev_recall = p.recall;
        prev_precision = p.precision;
    }
    return area;
}

BestF1 best_f1(const PRCurve& curve) {
    if (curve.points.empty()) throw ValidationError("best_f1: empty curve");
    BestF1 best;
    bool found = false;
    // Points are in descending threshold order; strict improvement keeps the
    // earliest (highest-threshold, least-effort) argmax.
    for (const PrPoint& p : curve.points) {
        double denom = p.precision + p.recall;
        double f1 = denom > 0 ? 2.0 * p.precision * p.recall / denom : 0.0;
        if (!found || f1 > best.f1) {
            best = BestF1{p.threshold, f1, p.precision, p.recall, p.effort};
            found = true;
        }
    }
    return best;
}

double brier(std::span<const double> scores, std::span<const std::uint8_t> labels) {
    if (scores.size() != labels.size()) throw ValidationError("brier: size mismatch");
    if (scores.empty()) throw ValidationError("brier: empty input");
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        double diff = scores[i] - (labels[i] ? 1.0 : 0.0);
        sum += diff * diff;
    }
    return sum / static_cast<double>(scores.size());
}

CalibrationReport calibration_bins(std::span<const double> scores,
                                   std::span<const std::uint8_t> labels, int bins,
                                   BinScheme scheme) {
    if (scores.size() != labels.size()) throw ValidationError("calibration: size mismatch");
    if (bins < 1) throw ValidationError("calibration: bins must be >= 1");
    if (scores.size() < static_cast<std::size_t>(bins))
        throw ValidationError("calibration: need at least `bins` items");

    CalibrationReport report;
    report.brier = brier(scores, labels);

    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    auto make_bin = [&](std::size_t begin, std::size_t end) {  // [begin, end) of sorted order
        CalibrationBin bin;
        bin.count = end - begin;
        if (bin.count == 0) return bin;
        bin.lower = scores[order[begin]];
        bin.upper = scores[order[end - 1]];
        double sum_pred = 0.0, sum_obs = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            sum_pred += scores[order[i]];
            sum_obs += labels[order[i]] ? 1.0 : 0.0;
        }
        bin.mean_predicted = sum_pred / static_cast<double>(bin.count);
        bin.observed_rate = sum_obs / static_cast<double>(bin.count);
        return bin;
    };

    if (scheme == BinScheme::quantile) {
        for (int b = 0; b < bins; ++b) {
            std::size_t begin = n * static_cast<std::size_t>(b) / static_cast<std::size_t>(bins);
            std::size_t end =
                n * static_cast<std::size_t>(b + 1) / static_cast<std::size_t>(bins);
            report.bins.push_back(make_bin(begin, end));
        }
    } else {
        double lo = scores[order.front()];
        double hi = scores[order.back()];
        double width = (hi - lo) / bins;
        std::size_t begin = 0;
        for (int b = 0; b < bins; ++b) {
            double edge = b + 1 == bins ? hi : lo + width * (b + 1);
            std::size_t end = begin;
            while (end < n && (scores[order[end]] < edge || b + 1 == bins)) ++end;
            CalibrationBin bin = make_bin(begin, end);
            bin.lower = lo + width * b;
            bin.upper = edge;
            report.bins.push_back(bin);
            begin = end;
        }
    }
    return report;
}

StrategyOutcome evaluate_strategy(const std::string& name,
                                  const std::vector<std::string>& selection,
                                  const std::vector<std::string>& exploited,
                                  const std::vector<std::string>& universe) {
    std::set<std::string> universe_set(universe.begin(), universe.end());
    std::set<std::string> selection_set(selection.begin(), selection.end());
    std::set<std::string> exploited_set(exploited.begin(), exploited.end());
    for (const std::string& id : selection_set) {
        if (!universe_set.count(id))
            throw ValidationError("evaluate_strategy: selection outside universe: " + id);
    }
    for (const std::string& id : exploited_set) {
        if (!universe_set.count(id))
            throw ValidationError("evaluate_strategy: exploited outside universe: " + id);
    }
    StrategyOutcome out;
    out.strategy = name;
    out.selected = selection_set.size();
    out.exploited = exploited_set.size();
    for (const std::string& id : selection_set) out.tp += exploited_set.count(id);
    out.efficiency = out.selected ? static_cast<double>(out.tp) / out.selected : 0.0;
    out.coverage = out.exploited ? static_cast<double>(out.tp) / out.exploited : 0.0;
    out.effort =
        universe_set.empty() ? 0.0 : static_cast<double>(out.selected) / universe_set.size();
    return out;
}

double threshold_for_effort(std::span<const double> scores, std::size_t universe,
                            double target_effort) {
    if (!(target_effort > 0) || target_effort > 1)
        throw ValidationError("threshold_for_effort: target must be in (0, 1]");
    if (scores.empty() || universe == 0)
        throw ValidationError("threshold_for_effort: empty scores");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    const double budget = target_effort * static_cast<double>(universe);
    double best = 0.0;
    bool found = false;
    std::size_t i = 0;
    while (i < sorted.size()) {
        double threshold = sorted[i];
        while (i < sorted.size() && sorted[i] == threshold) ++i;
        // Selecting everything scored >= threshold takes `i` items.
        if (static_cast<double>(i) <= budget) {
            best = threshold;
            found = true;
        } else {
            break;
        }
    }
    if (!found) {
        double min_effort =
            static_cast<double>(std::count(scores.begin(), scores.end(), sorted.front())) /
            static_cast<double>(universe);
        throw ValidationError("threshold_for_effort: unattainable target; smallest selection has effort " +
                              std::to_string(min_effort));
    }
    return best;
}

double threshold_for_coverage(std::span<const double> scores,
                              std::span<const std::uint8_t> labels, double target_coverage) {
    if (!(target_coverage > 0) || target_coverage > 1)
        throw ValidationError("threshold_for_coverage: target must be in (0, 1]");
    PRCurve curve = pr_curve(scores, labels);  // throws on zero positives
    for (const PrPoint& p : curve.points) {
        if (p.recall >= target_coverage) return p.threshold;
    }
    throw ValidationError("threshold_for_coverage: unattainable target; max attainable " +
                          std::to_string(curve.points.back().recall));
}

std::vector<StrategySpec> builtin_strategies() {
    std::vector<StrategySpec> specs;
    StrategySpec pr_none;
    pr_none.name = "cvss_pr_none";
    pr_none.feature = "cvss:PR:N";
    specs.push_back(pr_none);
    StrategySpec code_exec;
    code_exec.name = "keyword_code_execution";
    code_exec.feature = "keyword:code execution";
    specs.push_back(code_exec);
    StrategySpec edb;
    edb.name = "exploitdb";
    edb.feed = Feed::exploitdb;
    specs.push_back(edb);
    StrategySpec cwe119;
    cwe119.name = "cwe_119";
    cwe119.feature = "cwe:CWE-119";
    specs.push_back(cwe119);
    StrategySpec msf;
    msf.name = "metasploit";
    msf.feed = Feed::metasploit;
    specs.push_back(msf);
    StrategySpec kev;
    kev.name = "kev";
    kev.feed = Feed::kev;
    specs.push_back(kev);
    return specs;
}

std::vector<StrategyOutcome> run_strategies(const std::vector<StrategySpec>& specs,
                                            const Snapshot& snapshot,
                                            const FeatureExtractor& extractor,
                                            std::span<const double> scores) {
    if (!snapshot.labeled) throw ValidationError("run_strategies: snapshot must be labeled");
    std::vector<std::string> universe, exploited;
    for (const SnapshotRow& row : snapshot.rows) {
        universe.push_back(row.cve_id);
        if (row.label) exploited.push_back(row.cve_id);
    }
    std::vector<StrategyOutcome> outcomes;
    for (const StrategySpec& spec : specs) {
        std::vector<std::string> selection;
        if (spec.feature) {
            auto index = extractor.dictionary().index_of(*spec.feature);
            for (const SnapshotRow& row : snapshot.rows) {
                if (!index) break;  // feature absent from the dictionary: empty selection
                auto v = row.features.get(*index);
                if (v && *v == spec.feature_value) selection.push_back(row.cve_id);
            }
        } else if (spec.feed) {
            for (const SnapshotRow& row : snapshot.rows) {
                if (extractor.feeds().active(row.cve_id, *spec.feed, snapshot.as_of))
                    selection.push_back(row.cve_id);
            }
        } else if (spec.score_ge) {
            if (scores.size() != snapshot.rows.size())
                throw ValidationError("run_strategies: score threshold strategy requires scores");
            for (std::size_t i = 0; i < snapshot.rows.size(); ++i) {
                if (scores[i] >= *spec.score_ge) selection.push_back(snapshot.rows[i].cve_id);
            }
        } else {
            throw ValidationError("run_strategies: strategy has no selector: " + spec.name);
        }
        outcomes.push_back(evaluate_strategy(spec.name, selection, exploited, universe));
    }
    return outcomes;
}

}  // namespace epss
