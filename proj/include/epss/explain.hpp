#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "epss/featurizer.hpp"
#include "epss/gbt.hpp"

namespace epss {

/// Additive attribution of a margin prediction: phi0 + sum(phi) == margin.
struct Attribution {
    double phi0 = 0.0;
    std::map<std::uint32_t, double> phi;
    double margin = 0.0;

    double phi_sum() const;
};

/// Exact Shapley values for the ensemble via the polynomial-time
/// path-tracking recursion, with node covers as the background weighting.
/// Attributions are on the margin (log-odds) scale, where the additivity
/// identity holds exactly. Requires cover metadata on every tree.
Attribution tree_shap(const Ensemble& ensemble, const FeatureVector& x);

/// Cover-weighted expectation of a single tree's leaf values.
double tree_expected_value(const Tree& tree);

struct FeatureImportance {
    std::uint32_t feature = 0;
    std::string name;
    double mean_abs_phi = 0.0;
};

struct ClassImportance {
    FeatureClass cls = FeatureClass::age;
    double mean_abs_phi = 0.0;
    std::vector<double> abs_values;  // per (instance, feature-of-class) |phi|, plot data
};

struct AttributionSummary {
    std::vector<FeatureImportance> features;  // descending mean |phi|
    std::vector<ClassImportance> classes;     // descending mean |phi|
};

/// Aggregates attributions into per-feature and per-class mean-|phi|
/// rankings. Feature indices must belong to the dictionary.
AttributionSummary aggregate(const std::vector<Attribution>& attributions,
                             const FeatureDictionary& dictionary);

}  // namespace epss
