#include "epss/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <json.hpp>

#include "epss/corpus.hpp"
#include "epss/cvss.hpp"
#include "epss/error.hpp"
#include "epss/io_util.hpp"
#include "epss/rng.hpp"

namespace epss {

using nlohmann::json;

namespace {

constexpr double kLambdaCap = 0.33;

struct FeedPlan {
    Feed feed;
    double membership_rate;
    double effect;
};

const FeedPlan kFeedPlans[] = {
    {Feed::exploitdb, 0.12, 2.0},   {Feed::github_poc, 0.06, 1.6},
    {Feed::metasploit, 0.04, 2.6},  {Feed::kev, 0.025, 3.2},
    {Feed::google_project_zero, 0.008, 0.0}, {Feed::zdi, 0.04, 0.0},
    {Feed::nuclei, 0.05, 1.4},      {Feed::jaeles, 0.01, 0.0},
    {Feed::intrigue, 0.008, 0.0},   {Feed::sn1per, 0.005, 0.0},
};

struct KeywordPlan {
    const char* phrase;
    double rate;
    double effect;
};

const KeywordPlan kKeywordPlans[] = {
    {"remote attacker", 0.35, 0.8}, {"web", 0.20, 0.0},
    {"code execution", 0.18, 1.1},  {"denial of service", 0.15, 0.0},
    {"authenticated", 0.12, 0.0},
};

constexpr double kEffectPrNone = 0.9;
constexpr double kEffectAvNetwork = 0.7;
constexpr double kEffectCwe119 = 0.7;
constexpr double kEffectVendor0 = 0.8;
constexpr double kEffectVendor1 = -0.7;

// Deterministic v2 -> v3 mapping the conversion sub-model has to learn.
// Each output metric depends on one or two v2 metrics.
CvssV3Vector map_v2_to_v3(const CvssV2Vector& v2) {
    const auto av = v2.values[0], ac = v2.values[1], au = v2.values[2];
    const auto c = v2.values[3], i = v2.values[4], a = v2.values[5];
    CvssV3Vector v3;
    // AV: N->N, A->A, L->L (v2 order N,A,L ; v3 order N,A,L,P).
    v3.values[0] = av;
    // AC: L->L, M->L, H->H (v3 order L,H).
    v3.values[1] = static_cast<std::int8_t>(ac == 2 ? 1 : 0);
    // PR from Au: N->N, S->L, M->H (v3 order N,L,H).
    v3.values[2] = au;
    // UI: R iff AC is High or Au is Multiple (v3 order N,R).
    v3.values[3] = static_cast<std::int8_t>((ac == 2 || au == 2) ? 1 : 0);
    // S: Changed iff C and I differ (v3 order U,C).
    v3.values[4] = static_cast<std::int8_t>(c != i ? 1 : 0);
    // C/I/A: N->N, P->L, C->H (v2 order N,P,C ; v3 order H,L,N).
    auto impact = [](std::int8_t v) { return static_cast<std::int8_t>(2 - v); };
    v3.values[5] = impact(c);
    v3.values[6] = impact(i);
    v3.values[7] = impact(a);
    return v3;
}

struct CvePlan {
    std::string cve_id;
    Date published;
    std::string description;
    std::vector<std::string> keywords;
    bool supply_keyword_tags = false;
    std::optional<CvssV2Vector> v2;
    std::optional<CvssV3Vector> v3;         // native
    std::optional<CvssV3Vector> effective;  // native or mapped-from-v2
    std::vector<std::string> cwes;
    std::vector<std::string> vendors;
    std::int64_t reference_count = 0;
    std::vector<std::pair<int, std::int64_t>> reference_tags;
    struct Membership {
        Feed feed;
        std::optional<Date> date_added;
    };
    std::vector<Membership> memberships;
    std::vector<std::pair<Date, std::int64_t>> tweet_days;

    double static_margin = 0.0;  // effects that never change over time
};

double membership_effect(Feed feed) {
    for (const FeedPlan& plan : kFeedPlans) {
        if (plan.feed == feed) return plan.effect;
    }
    return 0.0;
}

// Margin of planted effects active at date d.
double margin_at(const CvePlan& plan, Date d) {
    double margin = plan.static_margin;
    for (const auto& m : plan.memberships) {
        if (!m.date_added || *m.date_added <= d) margin += membership_effect(m.feed);
    }
    return margin;
}

}  // namespace

SynthOutput generate_synth(const SynthParams& params) {
    if (params.n_cves < 1) throw ValidationError("synth: n_cves must be >= 1");
    if (params.as_of.plus_days(30) > params.window_end)
        throw ValidationError("synth: as_of + 30d must fit inside the window");

    Rng rng(derive_seed(params.seed, "synth"));

    std::vector<std::string> cwe_pool;
    for (int c : {119, 79, 20, 89, 787, 200, 264, 22, 125, 352, 476, 416, 190, 295, 862,
                  863, 306, 502, 611, 732, 94, 77, 918, 434, 269})
        cwe_pool.push_back("CWE-" + std::to_string(c));

    const Date published_lo = Date::from_civil(2019, 1, 1);
    const Date horizon_start = params.as_of.minus_days(365);

    std::vector<CvePlan> plans;
    plans.reserve(static_cast<std::size_t>(params.n_cves));
    for (int i = 0; i < params.n_cves; ++i) {
        CvePlan plan;

        double r = rng.uniform();
        if (r < 0.70) {
            std::int32_t span = horizon_start - published_lo;
            plan.published = published_lo.plus_days(
                static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(span))));
        } else if (r < 0.95) {
            std::int32_t span = params.as_of - horizon_start + 1;
            plan.published = horizon_start.plus_days(
                static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(span))));
        } else {
            std::int32_t span = params.window_end - params.as_of;
            plan.published = params.as_of.plus_days(
                1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(span))));
        }
        char id[32];
        std::snprintf(id, sizeof(id), "CVE-%04d-%06d", plan.published.civil().year, 100000 + i);
        plan.cve_id = id;

        for (const KeywordPlan& kw : kKeywordPlans) {
            if (rng.uniform() < kw.rate) {
                plan.keywords.push_back(kw.phrase);
                plan.static_margin += kw.effect;
            }
        }
        plan.supply_keyword_tags = rng.uniform() < 0.5;
        plan.description = "Flaw F" + std::to_string(i) + " in component K" +
                           std::to_string(static_cast<int>(rng.below(400)));
        for (const std::string& kw : plan.keywords) plan.description += " allows " + kw;
        plan.description += " via crafted packets.";

        double cvss_r = rng.uniform();
        auto random_v2 = [&]() {
            CvssV2Vector v2;
            for (int m = 0; m < kCvssV2MetricCount; ++m)
                v2.values[static_cast<std::size_t>(m)] =
                    static_cast<std::int8_t>(rng.below(3));
            return v2;
        };
        if (cvss_r < 0.60) {
            plan.v3 = map_v2_to_v3(random_v2());  // native v3 only
        } else if (cvss_r < 0.70) {
            plan.v2 = random_v2();
            plan.v3 = map_v2_to_v3(*plan.v2);  // both, consistent with the mapping
        } else if (cvss_r < 0.95) {
            plan.v2 = random_v2();  // v2 only: pipeline must convert
        }
        plan.effective = plan.v3 ? plan.v3 : (plan.v2 ? std::optional(map_v2_to_v3(*plan.v2))
                                                      : std::nullopt);
        if (plan.effective) {
            if (plan.effective->values[2] == 0) plan.static_margin += kEffectPrNone;
            if (plan.effective->values[0] == 0) plan.static_margin += kEffectAvNetwork;
        }

        if (rng.uniform() >= 0.10) {
            plan.cwes.push_back(cwe_pool[rng.below(cwe_pool.size())]);
            if (rng.uniform() < 0.2) plan.cwes.push_back(cwe_pool[rng.below(cwe_pool.size())]);
            std::sort(plan.cwes.begin(), plan.cwes.end());
            plan.cwes.erase(std::unique(plan.cwes.begin(), plan.cwes.end()), plan.cwes.end());
            for (const std::string& cwe : plan.cwes)
                if (cwe == "CWE-119") plan.static_margin += kEffectCwe119;
        }

        int n_vendors = 1 + static_cast<int>(rng.below(3));
        for (int v = 0; v < n_vendors; ++v) {
            // Zipf-flavored: low-numbered vendors are common.
            auto pick = static_cast<int>(30.0 * rng.uniform() * rng.uniform());
            char vendor[16];
            std::snprintf(vendor, sizeof(vendor), "vendor%02d", std::min(pick, 29));
            plan.vendors.push_back(vendor);
        }
        std::sort(plan.vendors.begin(), plan.vendors.end());
        plan.vendors.erase(std::unique(plan.vendors.begin(), plan.vendors.end()),
                           plan.vendors.end());
        for (const std::string& v : plan.vendors) {
            if (v == "vendor00") plan.static_margin += kEffectVendor0;
            if (v == "vendor01") plan.static_margin += kEffectVendor1;
        }

        plan.reference_count = 1 + static_cast<std::int64_t>(rng.below(12));
        for (int t = 0; t < kReferenceTagCount; ++t) {
            if (rng.uniform() < 0.15)
                plan.reference_tags.push_back({t, 1 + static_cast<std::int64_t>(rng.below(4))});
        }

        for (const FeedPlan& feed_plan : kFeedPlans) {
            if (rng.uniform() >= feed_plan.membership_rate) continue;
            CvePlan::Membership m;
            m.feed = feed_plan.feed;
            // Half the memberships carry an addition date (at or before
            // as_of, so the as_of state is frozen through the label window).
            if (plan.published <= params.as_of && rng.uniform() < 0.5) {
                std::int32_t span = params.as_of - plan.published + 1;
                m.date_added = plan.published.plus_days(
                    static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(span))));
            }
            plan.memberships.push_back(m);
        }

        if (rng.uniform() < 0.08) {
            int bursts = 1 + static_cast<int>(rng.below(4));
            Date t0 = plan.published.plus_days(static_cast<std::int32_t>(rng.below(60)));
            for (int b = 0; b < bursts; ++b) {
                Date day = t0.plus_days(static_cast<std::int32_t>(rng.below(10)));
                if (day > params.window_end) continue;
                plan.tweet_days.push_back({day, 1 + static_cast<std::int64_t>(rng.below(20))});
            }
            std::sort(plan.tweet_days.begin(), plan.tweet_days.end());
            plan.tweet_days.erase(
                std::unique(plan.tweet_days.begin(), plan.tweet_days.end(),
                            [](const auto& a, const auto& b) { return a.first == b.first; }),
                plan.tweet_days.end());
        }

        plans.push_back(std::move(plan));
    }

    // Calibrate base_rate so the expected 30-day prevalence at as_of over the
    // snapshot universe hits the target.
    std::vector<double> snapshot_margins;
    for (const CvePlan& plan : plans) {
        if (plan.published <= params.as_of)
            snapshot_margins.push_back(margin_at(plan, params.as_of));
    }
    if (snapshot_margins.empty()) throw Error("synth: no CVEs published by as_of");
    auto prevalence_for = [&](double base_rate) {
        double sum = 0.0;
        for (double m : snapshot_margins) {
            double lambda = std::min(kLambdaCap, base_rate * std::exp(m));
            sum += 1.0 - std::pow(1.0 - lambda, 30);
        }
        return sum / static_cast<double>(snapshot_margins.size());
    };
    double lo = 1e-7, hi = 0.3;
    for (int iter = 0; iter < 80; ++iter) {
        double mid = 0.5 * (lo + hi);
        (prevalence_for(mid) < params.target_prevalence ? lo : hi) = mid;
    }
    const double base_rate = 0.5 * (lo + hi);

    SynthOutput out;
    out.base_rate = base_rate;

    // Draw daily activity. Hazard is piecewise constant between feed
    // additions, frozen after as_of by construction.
    Rng activity_rng(derive_seed(params.seed, "synth.activity"));
    std::string observations;
    for (const CvePlan& plan : plans) {
        Date first = std::max(plan.published, params.window_start);
        if (first > params.window_end) continue;
        std::vector<Date> change_dates;
        for (const auto& m : plan.memberships) {
            if (m.date_added && *m.date_added > first && *m.date_added <= params.window_end)
                change_dates.push_back(*m.date_added);
        }
        std::sort(change_dates.begin(), change_dates.end());
        change_dates.erase(std::unique(change_dates.begin(), change_dates.end()),
                           change_dates.end());
        Date seg_start = first;
        std::size_t next_change = 0;
        while (seg_start <= params.window_end) {
            Date seg_end = params.window_end;
            if (next_change < change_dates.size())
                seg_end = std::min(seg_end, change_dates[next_change].minus_days(1));
            double lambda =
                std::min(kLambdaCap, base_rate * std::exp(margin_at(plan, seg_start)));
            for (Date d = seg_start; d <= seg_end; d = d.plus_days(1)) {
                if (activity_rng.uniform() < lambda) {
                    json obj;
                    obj["cve_id"] = plan.cve_id;
                    obj["date"] = d.to_string();
                    obj["source"] = "synth";
                    observations += obj.dump();
                    observations += '\n';
                }
            }
            if (next_change < change_dates.size()) {
                seg_start = change_dates[next_change];
                ++next_change;
            } else {
                break;
            }
        }
    }
    out.observations = std::move(observations);

    std::string vulns, feeds_text, tweets_text;
    for (const CvePlan& plan : plans) {
        json obj;
        obj["cve_id"] = plan.cve_id;
        obj["published"] = plan.published.to_string();
        obj["description"] = plan.description;
        if (plan.v3) obj["cvss_v3"] = plan.v3->to_string();
        if (plan.v2) obj["cvss_v2"] = plan.v2->to_string();
        if (!plan.cwes.empty()) obj["cwes"] = plan.cwes;
        if (!plan.vendors.empty()) {
            std::vector<std::string> uris;
            for (const std::string& v : plan.vendors)
                uris.push_back("cpe:2.3:a:" + v + ":product:*:*:*:*:*:*:*:*");
            obj["cpe_uris"] = uris;
        }
        obj["reference_count"] = plan.reference_count;
        if (!plan.reference_tags.empty()) {
            json tags = json::object();
            for (const auto& [t, c] : plan.reference_tags)
                tags[reference_tag_names()[static_cast<std::size_t>(t)]] = c;
            obj["reference_tags"] = tags;
        }
        if (plan.supply_keyword_tags) obj["keyword_tags"] = plan.keywords;
        vulns += obj.dump();
        vulns += '\n';

        for (const auto& m : plan.memberships) {
            json feed_obj;
            feed_obj["feed"] = feed_name(m.feed);
            feed_obj["cve_id"] = plan.cve_id;
            if (m.date_added) feed_obj["date_added"] = m.date_added->to_string();
            feeds_text += feed_obj.dump();
            feeds_text += '\n';
        }
        for (const auto& [day, count] : plan.tweet_days) {
            json tweet_obj;
            tweet_obj["cve_id"] = plan.cve_id;
            tweet_obj["date"] = day.to_string();
            tweet_obj["count"] = count;
            tweets_text += tweet_obj.dump();
            tweets_text += '\n';
        }
    }
    out.vulns = std::move(vulns);
    out.feeds = std::move(feeds_text);
    out.tweets = std::move(tweets_text);

    for (const CvePlan& plan : plans) {
        if (plan.published > params.as_of) continue;
        double lambda =
            std::min(kLambdaCap, base_rate * std::exp(margin_at(plan, params.as_of)));
        out.truth.push_back({plan.cve_id, 1.0 - std::pow(1.0 - lambda, 30)});
    }
    return out;
}

std::string SynthOutput::truth_ndjson() const {
    std::string text;
    for (const SynthTruth& t : truth) {
        json obj;
        obj["cve_id"] = t.cve_id;
        obj["true_p30"] = t.true_p30;
        text += obj.dump();
        text += '\n';
    }
    return text;
}

std::vector<SynthTruth> parse_truth(const std::string& content) {
    std::vector<SynthTruth> truth;
    for (const std::string& line : split_lines(content)) {
        if (line.empty()) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded()) throw Error("truth file: invalid json line");
        truth.push_back({obj.at("cve_id").get<std::string>(), obj.at("true_p30").get<double>()});
    }
    return truth;
}

double analytic_bayes_pr_auc(std::span<const double> probs) {
    if (probs.empty()) throw ValidationError("analytic_bayes_pr_auc: empty input");
    std::vector<double> sorted(probs.begin(), probs.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<double>());
    double total_positive = 0.0;
    for (double p : sorted) total_positive += p;
    if (!(total_positive > 0)) throw ValidationError("analytic_bayes_pr_auc: zero positive mass");

    double area = 0.0, tp = 0.0;
    double prev_recall = 0.0;
    double prev_precision = 1.0;
    bool first = true;
    std::size_t i = 0;
    while (i < sorted.size()) {
        double p = sorted[i];
        while (i < sorted.size() && sorted[i] == p) {
            tp += sorted[i];
            ++i;
        }
        double precision = tp / static_cast<double>(i);
        double recall = tp / total_positive;
        if (first) {
            prev_precision = precision;  // anchor at (0, first precision)
            first = false;
        }
        area += (recall - prev_recall) * 0.5 * (precision + prev_precision);
        prev_recall = recall;
        prev_precision = precision;
    }
    return area;
}

}  // namespace epss
