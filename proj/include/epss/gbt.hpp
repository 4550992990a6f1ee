#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "epss/feature_vector.hpp"

namespace epss {

enum class Objective : int { logistic = 0, squared = 1 };

struct BoostParams {
    double learning_rate = 0.11;
    int max_depth = 20;
    double subsample = 0.75;
    double gamma = 10.0;          // minimum loss reduction to keep a split
    double max_delta_step = 0.9;  // symmetric clip on unscaled leaf weight; 0 = unconstrained
    int rounds = 65;
    double lambda = 1.0;  // L2 on leaf weights
    double min_child_weight = 1.0;
    Objective objective = Objective::logistic;
    /// Fixed base margin; unset = logit of weighted prevalence (logistic) or
    /// weighted target mean (squared).
    std::optional<double> base_margin;
    std::uint64_t seed = 0;

    void validate() const;  // throws ValidationError
};

/// A training example: sparse features, a target in [0,1], and a weight.
/// A compressed pipeline row is the bundle of `exposure` daily examples with
/// `exploited_days` positives, so its positive mass is an exact integer;
/// from_counts preserves it exactly (target*weight would not for e.g. w=49).
class WeightedInstance {
public:
    WeightedInstance(FeatureVector features, double target, double weight)
        : features_(std::move(features)), weight_(weight), positive_mass_(target * weight) {}

    static WeightedInstance from_counts(FeatureVector features, double positive_count,
                                        double total_count) {
        WeightedInstance inst(std::move(features), 0.0, total_count);
        inst.positive_mass_ = positive_count;
        return inst;
    }

    const FeatureVector& features() const { return features_; }
    double weight() const { return weight_; }
    double positive_mass() const { return positive_mass_; }
    double target() const { return weight_ > 0 ? positive_mass_ / weight_ : 0.0; }

private:
    FeatureVector features_;
    double weight_;
    double positive_mass_;
};

struct TreeNode {
    std::int32_t feature = -1;  // -1 = leaf
    double threshold = 0.0;     // present values route left iff value < threshold
    bool default_left = false;  // where missing values go
    std::int32_t left = -1;
    std::int32_t right = -1;
    double value = 0.0;  // leaf value, learning rate already applied
    double cover = 0.0;  // sum of hessians routed here while training

    bool is_leaf() const { return feature < 0; }
};

struct Tree {
    std::vector<TreeNode> nodes;

    std::int32_t route(const FeatureVector& x) const;  // leaf node index
    double value_for(const FeatureVector& x) const { return nodes[static_cast<std::size_t>(route(x))].value; }
    int depth() const;
};

struct Ensemble {
    BoostParams params;
    double base_margin = 0.0;
    std::string dictionary_fingerprint;
    std::vector<Tree> trees;

    double predict_margin(const FeatureVector& x) const;
    double predict_proba(const FeatureVector& x) const;  // sigmoid of margin

    std::string to_json() const;                      // versioned, loss-free round-trip
    static Ensemble from_json(const std::string& s);  // throws Error on mismatch
};

/// Trains a boosted ensemble with second-order updates. Deterministic for a
/// fixed seed and params, independent of `threads`. Instances with identical
/// feature vectors are pooled before any floating-point loss accumulation,
/// which makes training on compressed weighted rows bitwise-identical to
/// training on their daily expansion (subsample=1).
Ensemble train(std::span<const WeightedInstance> instances, const BoostParams& params,
               std::string_view dictionary_fingerprint = "", int threads = 1);

double sigmoid(double x);
double logit(double p);

/// Weighted logistic loss w*(-target*m + log(1+e^m)) and its analytic
/// derivatives (exposed for the finite-difference oracle tests).
double logistic_loss(double margin, double target, double weight);
double logistic_grad(double margin, double target, double weight);
double logistic_hess(double margin, double target, double weight);

}  // namespace epss
