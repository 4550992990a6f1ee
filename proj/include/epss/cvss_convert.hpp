#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "epss/cvss.hpp"
#include "epss/gbt.hpp"

namespace epss {

/// Predicts a complete CVSSv3 base vector from a CVSSv2 base vector: one
/// one-vs-rest classifier per (v3 metric, value), over one-hot v2 inputs,
/// sharing the boosted-tree core. Inputs containing a v2 category never seen
/// in training fall back to the per-metric majority class with a diagnostic.
class CvssConversionModel {
public:
    struct Params {
        BoostParams boost;
        Params() {
            boost.learning_rate = 0.3;
            boost.max_depth = 12;
            boost.subsample = 1.0;
            boost.gamma = 0.0;
            boost.max_delta_step = 0.0;
            boost.rounds = 30;
            boost.lambda = 1.0;
            boost.min_child_weight = 0.0;
            boost.objective = Objective::logistic;
        }
    };

    static CvssConversionModel train(
        const std::vector<std::pair<CvssV2Vector, CvssV3Vector>>& pairs, std::uint64_t seed,
        const Params& params = Params());

    CvssV3Vector convert(const CvssV2Vector& input, bool* used_fallback = nullptr) const;

    bool trained() const { return trained_; }
    std::size_t training_pairs() const { return training_pairs_; }

    std::string to_json() const;
    static CvssConversionModel from_json(const std::string& text);

private:
    bool trained_ = false;
    std::size_t training_pairs_ = 0;
    // classifiers_[metric][value] scores P(v3 metric == value).
    std::array<std::vector<Ensemble>, kCvssV3MetricCount> classifiers_;
    std::array<std::int8_t, kCvssV3MetricCount> majority_{};
    // seen_[metric][value]: v2 category observed in training.
    std::array<std::array<bool, 3>, kCvssV2MetricCount> seen_{};
};

/// One-hot feature vector of a v2 base vector (18 indicators).
FeatureVector cvss_v2_one_hot(const CvssV2Vector& v);

}  // namespace epss
