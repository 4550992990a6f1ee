#include "epss/explain.hpp"

#include <algorithm>
#include <cmath>

#include "epss/error.hpp"

namespace epss {

namespace {

// Decision-path element for the Shapley recursion. pweight of the i-th
// element is the permutation weight of paths with i-1 "one" (followed)
// features in them.
struct PathElement {
    int feature = -1;
    double zero_fraction = 0.0;
    double one_fraction = 0.0;
    double pweight = 0.0;
};

void extend_path(PathElement* path, int unique_depth, double zero_fraction, double one_fraction,
                 int feature) {
    path[unique_depth].feature = feature;
    path[unique_depth].zero_fraction = zero_fraction;
    path[unique_depth].one_fraction = one_fraction;
    path[unique_depth].pweight = unique_depth == 0 ? 1.0 : 0.0;
    for (int i = unique_depth - 1; i >= 0; --i) {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / (unique_depth + 1.0);
        path[i].pweight = zero_fraction * path[i].pweight * (unique_depth - i) /
                          (unique_depth + 1.0);
    }
}

void unwind_path(PathElement* path, int unique_depth, int path_index) {
    const double one_fraction = path[path_index].one_fraction;
    const double zero_fraction = path[path_index].zero_fraction;
    double next_one_portion = path[unique_depth].pweight;
    for (int i = unique_depth - 1; i >= 0; --i) {
        if (one_fraction != 0) {
            const double tmp = path[i].pweight;
            path[i].pweight = next_one_portion * (unique_depth + 1.0) / ((i + 1) * one_fraction);
            next_one_portion =
                tmp - path[i].pweight * zero_fraction * (unique_depth - i) / (unique_depth + 1.0);
        } else {
            path[i].pweight =
                path[i].pweight * (unique_depth + 1.0) / (zero_fraction * (unique_depth - i));
        }
    }
    for (int i = path_index; i < unique_depth; ++i) {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
}

double unwound_path_sum(const PathElement* path, int unique_depth, int path_index) {
    const double one_fraction = path[path_index].one_fraction;
    const double zero_fraction = path[path_index].zero_fraction;
    double next_one_portion = path[unique_depth].pweight;
    double total = 0.0;
    for (int i = unique_depth - 1; i >= 0; --i) {
        if (one_fraction != 0) {
            const double tmp =
                next_one_portion * (unique_depth + 1.0) / ((i + 1) * one_fraction);
            total += tmp;
            next_one_portion =
                path[i].pweight - tmp * zero_fraction * (unique_depth - i) / (unique_depth + 1.0);
        } else if (zero_fraction != 0) {
            total +=
                (path[i].pweight / zero_fraction) / ((unique_depth - i) / (unique_depth + 1.0));
        }
    }
    return total;
}

std::int32_t hot_child(const TreeNode& node, const FeatureVector& x) {
    auto v = x.get(static_cast<std::uint32_t>(node.feature));
    if (v.has_value()) return *v < node.threshold ? node.left : node.right;
    return node.default_left ? node.left : node.right;
}

void shap_recurse(const Tree& tree, const FeatureVector& x,
                  std::map<std::uint32_t, double>& phi, std::int32_t node_index, int unique_depth,
                  PathElement* parent_path, double parent_zero_fraction,
                  double parent_one_fraction, int parent_feature) {
    const TreeNode& node = tree.nodes[static_cast<std::size_t>(node_index)];

    PathElement* path = parent_path + unique_depth + 1;
    std::copy(parent_path, parent_path + unique_depth + 1, path);
    extend_path(path, unique_depth, parent_zero_fraction, parent_one_fraction, parent_feature);

    if (node.is_leaf()) {
        for (int i = 1; i <= unique_depth; ++i) {
            const double w = unwound_path_sum(path, unique_depth, i);
            const PathElement& el = path[i];
            phi[static_cast<std::uint32_t>(el.feature)] +=
                w * (el.one_fraction - el.zero_fraction) * node.value;
        }
        return;
    }

    const std::int32_t hot = hot_child(node, x);
    const std::int32_t cold = hot == node.left ? node.right : node.left;
    const double cover = node.cover;
    if (!(cover > 0)) throw Error("tree_shap: model lacks cover metadata");
    const double hot_zero_fraction = tree.nodes[static_cast<std::size_t>(hot)].cover / cover;
    const double cold_zero_fraction = tree.nodes[static_cast<std::size_t>(cold)].cover / cover;
    double incoming_zero_fraction = 1.0;
    double incoming_one_fraction = 1.0;

    // If this feature is already on the path, undo that split so it can be
    // redone for this node.
    int path_index = 0;
    while (path_index <= unique_depth && path[path_index].feature != node.feature) ++path_index;
    if (path_index != unique_depth + 1) {
        incoming_zero_fraction = path[path_index].zero_fraction;
        incoming_one_fraction = path[path_index].one_fraction;
        unwind_path(path, unique_depth, path_index);
        unique_depth -= 1;
    }

    shap_recurse(tree, x, phi, hot, unique_depth + 1, path,
                 hot_zero_fraction * incoming_zero_fraction, incoming_one_fraction, node.feature);
    shap_recurse(tree, x, phi, cold, unique_depth + 1, path,
                 cold_zero_fraction * incoming_zero_fraction, 0.0, node.feature);
}

}  // namespace

double tree_expected_value(const Tree& tree) {
    // Cover-weighted mean of leaf values, computed bottom-up.
    std::vector<double> expected(tree.nodes.size(), 0.0);
    for (std::size_t i = tree.nodes.size(); i-- > 0;) {
        const TreeNode& node = tree.nodes[i];
        if (node.is_leaf()) {
            expected[i] = node.value;
        } else {
            if (!(node.cover > 0)) throw Error("tree_shap: model lacks cover metadata");
            expected[i] = (expected[static_cast<std::size_t>(node.left)] *
                               tree.nodes[static_cast<std::size_t>(node.left)].cover +
                           expected[static_cast<std::size_t>(node.right)] *
                               tree.nodes[static_cast<std::size_t>(node.right)].cover) /
                          node.cover;
        }
    }
    return expected[0];
}

Attribution tree_shap(const Ensemble& ensemble, const FeatureVector& x) {
    Attribution out;
    out.phi0 = ensemble.base_margin;
    out.margin = ensemble.predict_margin(x);
    for (const Tree& tree : ensemble.trees) {
        out.phi0 += tree_expected_value(tree);
        if (tree.nodes.size() == 1) continue;  // no feature dependence
        const int maxd = tree.depth() + 2;
        std::vector<PathElement> path(static_cast<std::size_t>(maxd * (maxd + 1)) / 2);
        shap_recurse(tree, x, out.phi, 0, 0, path.data(), 1.0, 1.0, -1);
    }
    return out;
}

double Attribution::phi_sum() const {
    double sum = 0.0;
    for (const auto& [feature, value] : phi) sum += value;
    return sum;
}

AttributionSummary aggregate(const std::vector<Attribution>& attributions,
                             const FeatureDictionary& dictionary) {
    if (attributions.empty()) throw ValidationError("aggregate: no attributions");
    std::vector<double> sum_abs(dictionary.size(), 0.0);
    for (const Attribution& a : attributions) {
        for (const auto& [feature, value] : a.phi) {
            if (feature >= dictionary.size())
                throw ValidationError("aggregate: attribution feature outside dictionary");
            sum_abs[feature] += std::abs(value);
        }
    }

    AttributionSummary summary;
    const double n = static_cast<double>(attributions.size());
    for (std::uint32_t f = 0; f < dictionary.size(); ++f) {
        FeatureImportance imp;
        imp.feature = f;
        imp.name = dictionary.def(f).name;
        imp.mean_abs_phi = sum_abs[f] / n;
        summary.features.push_back(std::move(imp));
    }
    std::stable_sort(summary.features.begin(), summary.features.end(),
                     [](const FeatureImportance& a, const FeatureImportance& b) {
                         return a.mean_abs_phi > b.mean_abs_phi;
                     });

    const int n_classes = static_cast<int>(FeatureClass::age) + 1;
    std::vector<ClassImportance> classes(static_cast<std::size_t>(n_classes));
    for (int c = 0; c < n_classes; ++c)
        classes[static_cast<std::size_t>(c)].cls = static_cast<FeatureClass>(c);
    for (const Attribution& a : attributions) {
        for (const auto& [feature, value] : a.phi) {
            auto& cls = classes[static_cast<std::size_t>(dictionary.def(feature).cls)];
            cls.abs_values.push_back(std::abs(value));
        }
    }
    for (ClassImportance& cls : classes) {
        double sum = 0.0;
        for (double v : cls.abs_values) sum += v;
        cls.mean_abs_phi = cls.abs_values.empty() ? 0.0 : sum / static_cast<double>(cls.abs_values.size());
        std::sort(cls.abs_values.begin(), cls.abs_values.end());
    }
    std::stable_sort(classes.begin(), classes.end(),
                     [](const ClassImportance& a, const ClassImportance& b) {
                         return a.mean_abs_phi > b.mean_abs_phi;
                     });
    summary.classes = std::move(classes);
    return summary;
}

}  // namespace epss
