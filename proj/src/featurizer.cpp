#include "epss/featurizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "epss/error.hpp"
#include "epss/io_util.hpp"
#include "epss/rng.hpp"

namespace epss {

namespace {

constexpr const char* kClassNames[] = {
    "exploit_code", "lists", "social_media", "tools", "references",
    "keywords",     "cvss",  "cwe",          "vendors", "age",
};

FeatureClass feed_class(Feed f) {
    int i = static_cast<int>(f);
    if (i < 3) return FeatureClass::exploit_code;
    if (i < 6) return FeatureClass::lists;
    return FeatureClass::tools;
}

std::optional<FeatureClass> class_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(FeatureClass::age); ++i) {
        if (name == kClassNames[i]) return static_cast<FeatureClass>(i);
    }
    return std::nullopt;
}

// Numeric-aware order for CWE ids: "CWE-79" before "CWE-119".
std::pair<long, std::string> cwe_sort_key(const std::string& id) {
    if (id.rfind("CWE-", 0) == 0) {
        const std::string digits = id.substr(4);
        if (!digits.empty() &&
            std::all_of(digits.begin(), digits.end(),
                        [](unsigned char c) { return std::isdigit(c); }))
            return {std::stol(digits), id};
    }
    return {static_cast<long>(1) << 40, id};
}

}  // namespace

const char* feature_class_name(FeatureClass c) { return kClassNames[static_cast<int>(c)]; }

std::size_t FeatureDictionary::fixed_feature_count() {
    // age + 10 feeds + 3 tweet windows + (1 + 16) reference counts
    // + 22 CVSS one-hot slots + 2 CWE fallbacks.
    return 1 + kFeedCount + 3 + 1 + kReferenceTagCount + kCvssV3OneHotSize + 2;
}

FeatureDictionary FeatureDictionary::build(const VulnCorpus& corpus, const Lexicon& lexicon,
                                           Date horizon_end, int min_count) {
    if (corpus.size() == 0) throw ValidationError("build_dictionary: empty corpus");
    FeatureDictionary dict;
    dict.min_count_ = min_count;
    dict.horizon_end_ = horizon_end;

    auto add = [&](std::string name, FeatureClass cls) {
        dict.defs_.push_back({std::move(name), cls});
    };

    add("age", FeatureClass::age);
    for (int f = 0; f < kFeedCount; ++f)
        add(std::string("feed:") + feed_name(static_cast<Feed>(f)),
            feed_class(static_cast<Feed>(f)));
    for (int w : kTweetWindows)
        add("tweets:" + std::to_string(w) + "d", FeatureClass::social_media);
    add("refs:total", FeatureClass::references);
    for (const std::string& tag : reference_tag_names())
        add("refs:" + tag, FeatureClass::references);
    for (int slot = 0; slot < kCvssV3OneHotSize; ++slot)
        add(cvss_v3_slot_name(slot), FeatureClass::cvss);
    add("cwe:none", FeatureClass::cwe);
    add("cwe:other", FeatureClass::cwe);

    // Occurrence counts over distinct CVEs published by the horizon.
    std::map<std::string, int> cwe_counts, vendor_counts, keyword_counts;
    for (const VulnRecord& rec : corpus.records()) {
        if (rec.published > horizon_end) continue;
        for (const std::string& cwe : rec.cwe_ids) ++cwe_counts[cwe];
        for (const std::string& vendor : rec.cpe_vendors) ++vendor_counts[vendor];
        const std::vector<std::string> tags =
            rec.keyword_tags ? *rec.keyword_tags : lexicon.extract(rec.description);
        for (const std::string& tag : tags) ++keyword_counts[tag];
    }

    std::vector<std::string> common_cwes;
    for (const auto& [cwe, count] : cwe_counts)
        if (count >= min_count) common_cwes.push_back(cwe);
    std::sort(common_cwes.begin(), common_cwes.end(), [](const auto& a, const auto& b) {
        return cwe_sort_key(a) < cwe_sort_key(b);
    });
    for (const std::string& cwe : common_cwes) add("cwe:" + cwe, FeatureClass::cwe);

    for (const auto& [vendor, count] : vendor_counts)
        if (count >= min_count) add("vendor:" + vendor, FeatureClass::vendors);
    for (const auto& [tag, count] : keyword_counts)
        if (count >= min_count) add("keyword:" + tag, FeatureClass::keywords);

    dict.index_names();
    return dict;
}

void FeatureDictionary::index_names() {
    by_name_.clear();
    by_name_.reserve(defs_.size());
    for (std::uint32_t i = 0; i < defs_.size(); ++i) by_name_.push_back({defs_[i].name, i});
    std::sort(by_name_.begin(), by_name_.end());
    for (std::size_t i = 1; i < by_name_.size(); ++i) {
        if (by_name_[i].first == by_name_[i - 1].first)
            throw Error("feature dictionary: duplicate name " + by_name_[i].first);
    }
}

std::optional<std::uint32_t> FeatureDictionary::index_of(const std::string& name) const {
    auto it = std::lower_bound(by_name_.begin(), by_name_.end(), name,
                               [](const auto& e, const std::string& n) { return e.first < n; });
    if (it != by_name_.end() && it->first == name) return it->second;
    return std::nullopt;
}

std::string FeatureDictionary::serialize() const {
    std::string out;
    out += "# horizon_end\t" + horizon_end_.to_string() + "\n";
    out += "# min_count\t" + std::to_string(min_count_) + "\n";
    for (std::uint32_t i = 0; i < defs_.size(); ++i) {
        out += std::to_string(i);
        out += '\t';
        out += feature_class_name(defs_[i].cls);
        out += '\t';
        out += defs_[i].name;
        out += '\n';
    }
    return out;
}

FeatureDictionary FeatureDictionary::parse(const std::string& text) {
    FeatureDictionary dict;
    for (const std::string& line : split_lines(text)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto tab = line.find('\t');
            if (tab == std::string::npos) continue;
            std::string key = line.substr(2, tab - 2);
            std::string value = line.substr(tab + 1);
            if (key == "horizon_end") {
                auto d = Date::parse(value);
                if (!d) throw Error("dictionary: invalid horizon_end");
                dict.horizon_end_ = *d;
            } else if (key == "min_count") {
                dict.min_count_ = std::stoi(value);
            }
            continue;
        }
        auto tab1 = line.find('\t');
        auto tab2 = line.find('\t', tab1 + 1);
        if (tab1 == std::string::npos || tab2 == std::string::npos)
            throw Error("dictionary: malformed line: " + line);
        std::uint32_t index = static_cast<std::uint32_t>(std::stoul(line.substr(0, tab1)));
        if (index != dict.defs_.size()) throw Error("dictionary: indices must be dense");
        auto cls = class_from_name(line.substr(tab1 + 1, tab2 - tab1 - 1));
        if (!cls) throw Error("dictionary: unknown class in line: " + line);
        dict.defs_.push_back({line.substr(tab2 + 1), *cls});
    }
    if (dict.defs_.empty()) throw Error("dictionary: empty");
    dict.index_names();
    return dict;
}

std::string FeatureDictionary::fingerprint() const { return hex64(fnv1a64(serialize())); }

std::optional<CvssConversionModel> build_cvss_converter(const VulnCorpus& corpus, Date cutoff,
                                                        std::uint64_t seed) {
    std::vector<std::pair<CvssV2Vector, CvssV3Vector>> pairs;
    for (const VulnRecord& rec : corpus.records()) {
        if (rec.published > cutoff) continue;
        if (rec.cvss_v2 && rec.cvss_v3) pairs.push_back({*rec.cvss_v2, *rec.cvss_v3});
    }
    if (pairs.empty()) return std::nullopt;
    return CvssConversionModel::train(pairs, seed);
}

FeatureExtractor::FeatureExtractor(const VulnCorpus& corpus, const FeedTable& feeds,
                                   const TweetTable& tweets,
                                   const FeatureDictionary& dictionary, const Lexicon& lexicon,
                                   const CvssConversionModel* converter)
    : corpus_(corpus), feeds_(feeds), tweets_(tweets), dict_(dictionary) {
    for (int w : kTweetWindows) {
        auto idx = dict_.index_of("tweets:" + std::to_string(w) + "d");
        if (!idx) throw Error("dictionary lacks tweet window feature");
        tweet_index_.push_back(*idx);
    }
    const auto cwe_none = dict_.index_of("cwe:none");
    const auto cwe_other = dict_.index_of("cwe:other");
    const auto refs_total = dict_.index_of("refs:total");
    if (!cwe_none || !cwe_other || !refs_total) throw Error("dictionary lacks fixed features");

    const std::size_t n = corpus_.size();
    static_template_.resize(n);
    effective_v3_.resize(n);
    effective_keywords_.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const VulnRecord& rec = corpus_.records()[i];
        FeatureVector& v = static_template_[i];

        if (rec.cvss_v3) {
            effective_v3_[i] = rec.cvss_v3;
        } else if (rec.cvss_v2 && converter) {
            effective_v3_[i] = converter->convert(*rec.cvss_v2);
        } else {
            effective_v3_[i] = std::nullopt;
            if (!rec.cvss_v2) missing_cvss_.push_back(rec.cve_id);
        }
        if (rec.cvss_v2 && !rec.cvss_v3 && !converter) missing_cvss_.push_back(rec.cve_id);

        if (effective_v3_[i]) {
            for (int m = 0; m < kCvssV3MetricCount; ++m) {
                int slot = cvss_v3_one_hot_slot(
                    m, effective_v3_[i]->values[static_cast<std::size_t>(m)]);
                auto idx = dict_.index_of(cvss_v3_slot_name(slot));
                if (idx) v.set(*idx, 1.0);
            }
        }

        if (rec.reference_count > 0)
            v.set(*refs_total, static_cast<double>(rec.reference_count));
        for (int t = 0; t < kReferenceTagCount; ++t) {
            std::int64_t c = rec.reference_tag_counts[static_cast<std::size_t>(t)];
            if (c > 0) {
                auto idx = dict_.index_of(
                    "refs:" + reference_tag_names()[static_cast<std::size_t>(t)]);
                if (idx) v.set(*idx, static_cast<double>(c));
            }
        }

        if (rec.cwe_ids.empty()) {
            v.set(*cwe_none, 1.0);
        } else {
            bool any_uncommon = false;
            for (const std::string& cwe : rec.cwe_ids) {
                auto idx = dict_.index_of("cwe:" + cwe);
                if (idx) {
                    v.set(*idx, 1.0);
                } else {
                    any_uncommon = true;
                }
            }
            if (any_uncommon) v.set(*cwe_other, 1.0);
        }

        for (const std::string& vendor : rec.cpe_vendors) {
            auto idx = dict_.index_of("vendor:" + vendor);
            if (idx) v.set(*idx, 1.0);
        }

        effective_keywords_[i] =
            rec.keyword_tags ? *rec.keyword_tags : lexicon.extract(rec.description);
        for (const std::string& tag : effective_keywords_[i]) {
            auto idx = dict_.index_of("keyword:" + tag);
            if (idx) v.set(*idx, 1.0);
        }

        // Feed memberships without a date are snapshots with no history and
        // are treated as always present.
        if (const auto* entries = feeds_.entries(rec.cve_id)) {
            for (const FeedEntry& e : *entries) {
                if (!e.date_added) {
                    auto idx = dict_.index_of(std::string("feed:") + feed_name(e.feed));
                    if (idx) v.set(*idx, 1.0);
                }
            }
        }
    }
    std::sort(missing_cvss_.begin(), missing_cvss_.end());
}

FeatureVector FeatureExtractor::featurize(std::size_t cve_index, Date d) const {
    const VulnRecord& rec = corpus_.records()[cve_index];
    if (d < rec.published)
        throw ValidationError("featurize: date precedes publication of " + rec.cve_id);
    FeatureVector v = static_template_[cve_index];
    v.set(kAgeFeatureIndex, static_cast<double>(d - rec.published));
    if (const auto* entries = feeds_.entries(rec.cve_id)) {
        for (const FeedEntry& e : *entries) {
            if (e.date_added && *e.date_added <= d) {
                auto idx = dict_.index_of(std::string("feed:") + feed_name(e.feed));
                if (idx) v.set(*idx, 1.0);
            }
        }
    }
    for (int wi = 0; wi < 3; ++wi) {
        std::int64_t sum =
            tweets_.window_sum(rec.cve_id, d.minus_days(kTweetWindows[wi]), d);
        if (sum > 0) v.set(tweet_index_[static_cast<std::size_t>(wi)], static_cast<double>(sum));
    }
    return v;
}

FeatureVector FeatureExtractor::featurize(const std::string& cve_id, Date d) const {
    auto idx = corpus_.index_of(cve_id);
    if (!idx) throw ValidationError("featurize: unknown cve_id " + cve_id);
    return featurize(*idx, d);
}

}  // namespace epss
