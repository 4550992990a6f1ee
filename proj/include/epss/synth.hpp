#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "epss/date.hpp"

namespace epss {

/// Synthetic corpus generator. Each CVE gets planted binary drivers (feeds,
/// CVSS PR:N / AV:N, keywords, one CWE, two vendors) with fixed log-hazard
/// effects; daily exploitation activity is drawn as Bernoulli(lambda) with
/// lambda = base_rate * exp(sum of effects), capped. base_rate is calibrated
/// by bisection so the expected 30-day label prevalence at as_of matches
/// target_prevalence. Feed additions happen only at or before as_of, so the
/// true 30-day exploitation probability at as_of is a known function of the
/// as_of feature vector: p = 1 - (1 - lambda)^30.
struct SynthParams {
    int n_cves = 20000;
    std::uint64_t seed = 42;
    Date window_start = Date::from_civil(2021, 6, 1);
    Date window_end = Date::from_civil(2022, 12, 31);
    Date as_of = Date::from_civil(2022, 11, 1);
    double target_prevalence = 0.064;
};

struct SynthTruth {
    std::string cve_id;
    double true_p30 = 0.0;  // at as_of; only CVEs published on or before as_of
};

struct SynthOutput {
    std::string vulns;         // NDJSON stream contents
    std::string observations;
    std::string feeds;
    std::string tweets;
    std::vector<SynthTruth> truth;
    double base_rate = 0.0;  // calibrated hazard scale

    std::string truth_ndjson() const;
};

SynthOutput generate_synth(const SynthParams& params);

std::vector<SynthTruth> parse_truth(const std::string& content);

/// Expected-count PR-AUC of scoring by the true probabilities themselves:
/// thresholds sweep distinct p descending, TP(t) = sum of p over items with
/// p >= t, precision/recall from expected counts, trapezoid with the usual
/// (recall 0, first precision) anchor. The realized Bayes PR-AUC converges to
/// this as the universe grows.
double analytic_bayes_pr_auc(std::span<const double> probs);

}  // namespace epss
