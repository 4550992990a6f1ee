#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "epss/error.hpp"
#include "epss/explain.hpp"
#include "epss/rng.hpp"
#include "oracles.hpp"

using namespace epss;

namespace {

// Random tree over `n_features`, with additive covers and repeated features
// allowed along a path (exercises the unwind logic).
Tree random_tree(Rng& rng, int n_features, int max_depth) {
    Tree tree;
    struct Pending {
        std::int32_t node;
        int depth;
        double cover;
    };
    tree.nodes.push_back(TreeNode{});
    std::vector<Pending> queue{{0, 0, 64.0 + static_cast<double>(rng.below(64))}};
    while (!queue.empty()) {
        Pending current = queue.back();
        queue.pop_back();
        TreeNode& node = tree.nodes[static_cast<std::size_t>(current.node)];
        node.cover = current.cover;
        bool split = current.depth < max_depth && current.cover >= 4.0 && rng.uniform() < 0.75;
        if (!split) {
            node.feature = -1;
            node.value = rng.uniform() * 4.0 - 2.0;
            continue;
        }
        node.feature = static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(n_features)));
        node.threshold = rng.uniform();
        node.default_left = rng.uniform() < 0.5;
        node.left = static_cast<std::int32_t>(tree.nodes.size());
        node.right = node.left + 1;
        double fraction = 0.25 + 0.5 * rng.uniform();
        double left_cover = current.cover * fraction;
        double right_cover = current.cover - left_cover;
        std::int32_t left = node.left, right = node.right;
        tree.nodes.push_back(TreeNode{});
        tree.nodes.push_back(TreeNode{});
        queue.push_back({left, current.depth + 1, left_cover});
        queue.push_back({right, current.depth + 1, right_cover});
    }
    return tree;
}

FeatureVector random_point(Rng& rng, int n_features) {
    FeatureVector x;
    for (int f = 0; f < n_features; ++f) {
        double r = rng.uniform();
        if (r < 0.4) {
            x.set(static_cast<std::uint32_t>(f), rng.uniform());
        } else if (r < 0.5) {
            x.set(static_cast<std::uint32_t>(f), 0.0);  // explicit zero
        }  // else missing
    }
    return x;
}

}  // namespace

TEST_CASE("single-leaf tree: no feature attribution, bias carries everything") {
    Ensemble e;
    e.base_margin = -2.0;
    Tree t;
    TreeNode leaf;
    leaf.value = 0.7;
    leaf.cover = 10.0;
    t.nodes.push_back(leaf);
    e.trees.push_back(t);
    Attribution a = tree_shap(e, FeatureVector{});
    CHECK(a.phi.empty());
    CHECK(a.phi0 == doctest::Approx(-1.3).epsilon(1e-15));
    CHECK(a.margin == doctest::Approx(-1.3).epsilon(1e-15));
}

TEST_CASE("depth-2 tree over 3 binary features matches brute-force Shapley") {
    // Hand-constructed tree with one repeated feature on a path.
    Tree t;
    t.nodes.resize(7);
    t.nodes[0] = TreeNode{0, 0.5, false, 1, 2, 0.0, 100.0};
    t.nodes[1] = TreeNode{1, 0.5, true, 3, 4, 0.0, 60.0};
    t.nodes[2] = TreeNode{2, 0.5, false, 5, 6, 0.0, 40.0};
    t.nodes[3] = TreeNode{-1, 0, false, -1, -1, 1.0, 20.0};
    t.nodes[4] = TreeNode{-1, 0, false, -1, -1, -0.5, 40.0};
    t.nodes[5] = TreeNode{-1, 0, false, -1, -1, 2.0, 25.0};
    t.nodes[6] = TreeNode{-1, 0, false, -1, -1, -2.0, 15.0};
    Ensemble e;
    e.trees.push_back(t);

    Rng rng(3);
    for (int probe = 0; probe < 20; ++probe) {
        FeatureVector x = random_point(rng, 3);
        Attribution a = tree_shap(e, x);
        auto reference = oracle::brute_force_shap(t, x);
        for (const auto& [feature, expected] : reference) {
            double got = a.phi.count(feature) ? a.phi.at(feature) : 0.0;
            CHECK(std::abs(got - expected) <= 1e-8);
        }
        CHECK(std::abs(a.phi0 + a.phi_sum() - a.margin) <= 1e-8);
    }
}

TEST_CASE("random trees up to 12 active features match brute force within 1e-8") {
    Rng rng(42);
    for (int trial = 0; trial < 30; ++trial) {
        Tree t = random_tree(rng, 12, 5);
        Ensemble e;
        e.base_margin = 0.25;
        e.trees.push_back(t);
        FeatureVector x = random_point(rng, 12);
        Attribution a = tree_shap(e, x);
        auto reference = oracle::brute_force_shap(t, x);
        for (const auto& [feature, expected] : reference) {
            double got = a.phi.count(feature) ? a.phi.at(feature) : 0.0;
            CHECK(std::abs(got - expected) <= 1e-8);
        }
        for (const auto& [feature, got] : a.phi) {
            if (!reference.count(feature)) CHECK(std::abs(got) <= 1e-8);
        }
        CHECK(std::abs(a.phi0 + a.phi_sum() - a.margin) <= 1e-8);
    }
}

TEST_CASE("local accuracy holds on a trained ensemble") {
    Rng rng(17);
    std::vector<WeightedInstance> instances;
    for (int i = 0; i < 400; ++i) {
        FeatureVector v;
        v.set(0, static_cast<double>(rng.below(300)));
        for (int f = 1; f < 15; ++f)
            if (rng.uniform() < 0.4) v.set(static_cast<std::uint32_t>(f), 1.0);
        double p = v.present(1) ? 0.7 : 0.15;
        instances.push_back(
            WeightedInstance::from_counts(v, rng.uniform() < p ? 1.0 : 0.0, 1.0));
    }
    BoostParams params;
    params.learning_rate = 0.2;
    params.max_depth = 6;
    params.subsample = 0.8;
    params.gamma = 0.0;
    params.max_delta_step = 0.0;
    params.rounds = 15;
    params.min_child_weight = 0.5;
    params.seed = 9;
    Ensemble model = train(instances, params);
    for (const WeightedInstance& inst : instances) {
        Attribution a = tree_shap(model, inst.features());
        CHECK(std::abs(a.phi0 + a.phi_sum() - a.margin) <= 1e-8);
        CHECK(a.margin == doctest::Approx(model.predict_margin(inst.features())).epsilon(1e-12));
    }
}

TEST_CASE("additivity: two-tree attribution is the sum of single-tree runs") {
    Rng rng(5);
    Tree t1 = random_tree(rng, 8, 4);
    Tree t2 = random_tree(rng, 8, 4);
    Ensemble both, first, second;
    both.base_margin = 1.0;
    first.base_margin = 1.0;
    second.base_margin = 0.0;
    both.trees = {t1, t2};
    first.trees = {t1};
    second.trees = {t2};
    for (int probe = 0; probe < 10; ++probe) {
        FeatureVector x = random_point(rng, 8);
        Attribution a = tree_shap(both, x);
        Attribution b = tree_shap(first, x);
        Attribution c = tree_shap(second, x);
        CHECK(a.phi0 == doctest::Approx(b.phi0 + c.phi0).epsilon(1e-12));
        for (const auto& [feature, value] : a.phi) {
            double expected = (b.phi.count(feature) ? b.phi.at(feature) : 0.0) +
                              (c.phi.count(feature) ? c.phi.at(feature) : 0.0);
            CHECK(value == doctest::Approx(expected).epsilon(1e-9));
        }
    }
}

TEST_CASE("missingness: features absent from every tree get zero attribution") {
    Rng rng(11);
    Tree t = random_tree(rng, 4, 4);  // features 0..3 only
    Ensemble e;
    e.trees.push_back(t);
    FeatureVector x = random_point(rng, 4);
    x.set(77, 1.0);  // never split on
    Attribution a = tree_shap(e, x);
    CHECK(a.phi.count(77) == 0);
}

TEST_CASE("symmetry: duplicated split behavior yields equal attributions") {
    // Two features with identical split structure and covers on sibling
    // subtrees; when both are present and equal, their phi must match.
    Tree t;
    t.nodes.resize(7);
    t.nodes[0] = TreeNode{0, 0.5, false, 1, 2, 0.0, 80.0};
    t.nodes[1] = TreeNode{1, 0.5, false, 3, 4, 0.0, 40.0};
    t.nodes[2] = TreeNode{1, 0.5, false, 5, 6, 0.0, 40.0};
    // Payoff depends on an AND of both features, symmetric by construction:
    // value 1 iff both route left.
    t.nodes[3] = TreeNode{-1, 0, false, -1, -1, 1.0, 20.0};
    t.nodes[4] = TreeNode{-1, 0, false, -1, -1, 0.0, 20.0};
    t.nodes[5] = TreeNode{-1, 0, false, -1, -1, 0.0, 20.0};
    t.nodes[6] = TreeNode{-1, 0, false, -1, -1, 0.0, 20.0};
    Ensemble e;
    e.trees.push_back(t);
    FeatureVector x;
    x.set(0, 0.2);
    x.set(1, 0.2);
    Attribution a = tree_shap(e, x);
    CHECK(a.phi.at(0) == doctest::Approx(a.phi.at(1)).epsilon(1e-12));
}

TEST_CASE("missing covers produce an error") {
    Tree t;
    t.nodes.resize(3);
    t.nodes[0] = TreeNode{0, 0.5, false, 1, 2, 0.0, 0.0};  // zero cover
    t.nodes[1] = TreeNode{-1, 0, false, -1, -1, 1.0, 0.0};
    t.nodes[2] = TreeNode{-1, 0, false, -1, -1, -1.0, 0.0};
    Ensemble e;
    e.trees.push_back(t);
    FeatureVector x;
    x.set(0, 1.0);
    CHECK_THROWS_AS(tree_shap(e, x), Error);
}

TEST_CASE("aggregate ranks features and classes by mean absolute phi") {
    // Tiny dictionary via a tiny corpus.
    std::vector<VulnRecord> records;
    VulnRecord rec;
    rec.cve_id = "CVE-2022-1000";
    rec.published = Date::from_civil(2022, 1, 1);
    rec.description = "x";
    records.push_back(rec);
    VulnCorpus corpus(std::move(records));
    auto dict = FeatureDictionary::build(corpus, Lexicon::bundled(),
                                         Date::from_civil(2022, 6, 1), 10);

    SUBCASE("all-zero attributions give all-zero means") {
        std::vector<Attribution> attributions(3);
        auto summary = aggregate(attributions, dict);
        for (const auto& f : summary.features) CHECK(f.mean_abs_phi == 0.0);
        for (const auto& c : summary.classes) CHECK(c.mean_abs_phi == 0.0);
    }

    SUBCASE("planted single-feature model ranks that feature first") {
        std::vector<Attribution> attributions;
        for (int i = 0; i < 5; ++i) {
            Attribution a;
            a.phi[kAgeFeatureIndex] = i % 2 ? 0.5 : -0.5;
            attributions.push_back(a);
        }
        auto summary = aggregate(attributions, dict);
        CHECK(summary.features[0].feature == kAgeFeatureIndex);
        CHECK(summary.features[0].mean_abs_phi == doctest::Approx(0.5));
        for (std::size_t i = 1; i < summary.features.size(); ++i)
            CHECK(summary.features[i].mean_abs_phi == 0.0);
        CHECK(summary.classes[0].cls == FeatureClass::age);
    }

    SUBCASE("attribution outside the dictionary is rejected") {
        std::vector<Attribution> attributions(1);
        attributions[0].phi[999999] = 1.0;
        CHECK_THROWS_AS(aggregate(attributions, dict), ValidationError);
    }
}
