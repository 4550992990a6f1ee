#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "epss/corpus.hpp"
#include "epss/cvss_convert.hpp"
#include "epss/date.hpp"
#include "epss/feature_vector.hpp"
#include "epss/lexicon.hpp"

namespace epss {

enum class FeatureClass : int {
    exploit_code = 0,
    lists,
    social_media,
    tools,
    references,
    keywords,
    cvss,
    cwe,
    vendors,
    age,
};
const char* feature_class_name(FeatureClass c);

struct FeatureDef {
    std::string name;
    FeatureClass cls;
};

inline constexpr std::uint32_t kAgeFeatureIndex = 0;
inline constexpr int kTweetWindows[3] = {7, 30, 90};

/// Stable feature index <-> name/class mapping. Fixed-arity features (age,
/// feeds, tweet windows, reference counts, CVSS one-hot slots, the two CWE
/// fallbacks) are always present; vendor/CWE/keyword binaries require
/// min_count distinct CVEs published by the build horizon.
class FeatureDictionary {
public:
    static FeatureDictionary build(const VulnCorpus& corpus, const Lexicon& lexicon,
                                   Date horizon_end, int min_count = 10);

    std::size_t size() const { return defs_.size(); }
    const FeatureDef& def(std::uint32_t index) const { return defs_[index]; }
    std::optional<std::uint32_t> index_of(const std::string& name) const;

    int min_count() const { return min_count_; }
    Date horizon_end() const { return horizon_end_; }

    /// "index<TAB>class<TAB>name" lines, preceded by two comment lines
    /// recording the build horizon and threshold.
    std::string serialize() const;
    static FeatureDictionary parse(const std::string& text);

    /// FNV-1a 64 of the serialization, hex.
    std::string fingerprint() const;

    /// Number of features always present regardless of corpus content.
    static std::size_t fixed_feature_count();

private:
    std::vector<FeatureDef> defs_;
    std::vector<std::pair<std::string, std::uint32_t>> by_name_;  // sorted
    int min_count_ = 10;
    Date horizon_end_{0};
    void index_names();
};

/// Computes sparse per-CVE feature vectors for any date at or after
/// publication. Pure per (CVE, date) after construction; safe to share across
/// threads. Reads nothing dated after the requested date.
class FeatureExtractor {
public:
    FeatureExtractor(const VulnCorpus& corpus, const FeedTable& feeds, const TweetTable& tweets,
                     const FeatureDictionary& dictionary, const Lexicon& lexicon,
                     const CvssConversionModel* converter = nullptr);

    FeatureVector featurize(std::size_t cve_index, Date d) const;
    FeatureVector featurize(const std::string& cve_id, Date d) const;  // throws if unknown

    const FeatureDictionary& dictionary() const { return dict_; }
    const VulnCorpus& corpus() const { return corpus_; }
    const FeedTable& feeds() const { return feeds_; }
    const TweetTable& tweets() const { return tweets_; }

    /// CVEs that have neither a native nor a convertible CVSS vector.
    const std::vector<std::string>& missing_cvss() const { return missing_cvss_; }

    /// Effective v3 vector (native or converted), if any.
    const std::optional<CvssV3Vector>& effective_cvss(std::size_t cve_index) const {
        return effective_v3_[cve_index];
    }

    /// Effective keyword tags (supplied on the record, else lexicon-derived).
    const std::vector<std::string>& effective_keywords(std::size_t cve_index) const {
        return effective_keywords_[cve_index];
    }

private:
    const VulnCorpus& corpus_;
    const FeedTable& feeds_;
    const TweetTable& tweets_;
    const FeatureDictionary& dict_;
    std::vector<FeatureVector> static_template_;  // everything date-independent
    std::vector<std::optional<CvssV3Vector>> effective_v3_;
    std::vector<std::vector<std::string>> effective_keywords_;
    std::vector<std::string> missing_cvss_;
    std::vector<std::uint32_t> tweet_index_;  // dictionary indices of the 3 windows
};

/// Training pairs (both vectors present, published <= cutoff) for the
/// conversion sub-model. Returns nullopt if there are none.
std::optional<CvssConversionModel> build_cvss_converter(const VulnCorpus& corpus, Date cutoff,
                                                        std::uint64_t seed);

}  // namespace epss
