#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "epss/error.hpp"
#include "epss/gbt.hpp"
#include "epss/rng.hpp"
#include "oracles.hpp"

using namespace epss;

namespace {

FeatureVector fv(std::initializer_list<std::pair<std::uint32_t, double>> entries) {
    FeatureVector v;
    for (const auto& [i, x] : entries) v.set(i, x);
    return v;
}

// Random sparse instances over `dim` features with labels correlated to a
// couple of planted indicators.
std::vector<WeightedInstance> random_instances(int n, int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<WeightedInstance> out;
    for (int i = 0; i < n; ++i) {
        FeatureVector v;
        for (int f = 0; f < dim; ++f) {
            if (rng.uniform() < 0.3) v.set(static_cast<std::uint32_t>(f), rng.uniform() < 0.5 ? 1.0 : rng.uniform() * 4);
        }
        double signal = v.present(0) ? 1.2 : -0.6;
        signal += v.present(1) ? 0.8 : 0.0;
        double p = 1.0 / (1.0 + std::exp(-(signal - 0.5)));
        double label = rng.uniform() < p ? 1.0 : 0.0;
        out.push_back(WeightedInstance::from_counts(v, label, 1.0));
    }
    return out;
}

BoostParams small_params() {
    BoostParams p;
    p.learning_rate = 0.3;
    p.max_depth = 4;
    p.subsample = 1.0;
    p.gamma = 0.0;
    p.max_delta_step = 0.0;
    p.rounds = 10;
    p.min_child_weight = 0.25;
    return p;
}

}  // namespace

TEST_CASE("gradient and hessian match central finite differences") {
    Rng rng(42);
    double max_rel_g = 0.0, max_rel_h = 0.0;
    for (int i = 0; i < 1000; ++i) {
        double margin = -6.0 + 12.0 * rng.uniform();
        double target;
        do {
            target = rng.uniform();
        } while (std::abs(sigmoid(margin) - target) < 1e-3);  // keep g well-conditioned
        double weight = 0.5 + 99.5 * rng.uniform();

        const double eps_g = 3e-4, eps_h = 1.5e-3;
        double numeric_g = (logistic_loss(margin + eps_g, target, weight) -
                            logistic_loss(margin - eps_g, target, weight)) /
                           (2 * eps_g);
        double numeric_h = (logistic_loss(margin + eps_h, target, weight) -
                            2 * logistic_loss(margin, target, weight) +
                            logistic_loss(margin - eps_h, target, weight)) /
                           (eps_h * eps_h);
        double g = logistic_grad(margin, target, weight);
        double h = logistic_hess(margin, target, weight);
        max_rel_g = std::max(max_rel_g, std::abs(numeric_g - g) / std::abs(g));
        max_rel_h = std::max(max_rel_h, std::abs(numeric_h - h) / std::abs(h));
    }
    CHECK(max_rel_g <= 1e-5);
    CHECK(max_rel_h <= 1e-5);
}

TEST_CASE("all-zero targets give degenerate trees pushed toward zero") {
    std::vector<WeightedInstance> instances;
    Rng rng(1);
    for (int i = 0; i < 50; ++i) {
        FeatureVector v;
        v.set(0, rng.uniform());
        v.set(static_cast<std::uint32_t>(1 + rng.below(5)), 1.0);
        instances.push_back(WeightedInstance::from_counts(v, 0.0, 1.0));
    }
    BoostParams p;  // Table-style defaults: gamma 10, max_delta_step 0.9
    p.subsample = 1.0;
    Ensemble model = train(instances, p);
    for (const Tree& t : model.trees) CHECK(t.nodes.size() == 1);  // no split clears gamma
    for (const WeightedInstance& inst : instances)
        CHECK(model.predict_proba(inst.features()) < 1e-3);
}

TEST_CASE("single separating binary feature is found and driven to the rails") {
    std::vector<WeightedInstance> instances;
    const int positives = 400, total = 1000;
    for (int i = 0; i < total; ++i) {
        FeatureVector v;
        if (i < positives) v.set(3, 1.0);
        instances.push_back(WeightedInstance::from_counts(v, i < positives ? 1.0 : 0.0, 1.0));
    }
    BoostParams p;  // Table-style defaults: lr 0.11, 65 rounds, gamma 10, clip 0.9
    p.subsample = 1.0;
    Ensemble model = train(instances, p);
    REQUIRE(!model.trees.empty());
    CHECK(model.trees[0].nodes[0].feature == 3);
    double proba_pos = model.predict_proba(fv({{3, 1.0}}));
    double proba_neg = model.predict_proba(fv({}));
    CHECK(proba_pos >= 0.95);
    CHECK(proba_neg <= 0.05);

    // With gamma 0 every round re-splits into pure leaves, so the scalar
    // Newton trace pins the exact values.
    p.gamma = 0.0;
    Ensemble traced = train(instances, p);
    auto [expected_pos, expected_neg] =
        oracle::two_group_boost_trace(positives, total - positives, p.rounds, p);
    CHECK(traced.predict_proba(fv({{3, 1.0}})) ==
          doctest::Approx(expected_pos).epsilon(1e-12));
    CHECK(traced.predict_proba(fv({})) == doctest::Approx(expected_neg).epsilon(1e-12));
}

TEST_CASE("two-group training matches the scalar Newton trace") {
    // One binary feature, pure groups: the ensemble's per-group margins must
    // equal a hand iteration of the stated update rule.
    const double pos_weight = 13, neg_weight = 27;
    std::vector<WeightedInstance> instances;
    instances.push_back(WeightedInstance::from_counts(fv({{3, 1.0}}), pos_weight, pos_weight));
    instances.push_back(WeightedInstance::from_counts(fv({}), 0.0, neg_weight));
    BoostParams p;
    p.subsample = 1.0;
    p.gamma = 0.0;
    p.max_delta_step = 0.9;
    p.rounds = 17;
    auto [expected_pos, expected_neg] =
        oracle::two_group_boost_trace(pos_weight, neg_weight, p.rounds, p);
    Ensemble model = train(instances, p);
    CHECK(model.predict_proba(fv({{3, 1.0}})) == doctest::Approx(expected_pos).epsilon(1e-12));
    CHECK(model.predict_proba(fv({})) == doctest::Approx(expected_neg).epsilon(1e-12));
}

TEST_CASE("empty ensemble predicts sigmoid of the base margin") {
    Ensemble e;
    e.base_margin = 0.0;
    CHECK(e.predict_proba(FeatureVector{}) == 0.5);
    e.base_margin = 2.0;
    CHECK(e.predict_proba(FeatureVector{}) == doctest::Approx(sigmoid(2.0)));
}

TEST_CASE("hand-built one-split tree predicts the hand-computed sigmoid") {
    Ensemble e;
    e.base_margin = -1.0;
    Tree t;
    t.nodes.resize(3);
    t.nodes[0] = TreeNode{7, 0.5, false, 1, 2, 0.0, 10.0};
    t.nodes[1] = TreeNode{-1, 0.0, false, -1, -1, 0.4, 6.0};
    t.nodes[2] = TreeNode{-1, 0.0, false, -1, -1, -0.3, 4.0};
    e.trees.push_back(t);
    CHECK(e.predict_margin(fv({{7, 0.2}})) == doctest::Approx(-0.6).epsilon(1e-15));
    CHECK(e.predict_proba(fv({{7, 0.9}})) == doctest::Approx(sigmoid(-1.3)).epsilon(1e-15));
    // Missing feature follows the default direction (right here).
    CHECK(e.predict_margin(fv({})) == doctest::Approx(-1.3).epsilon(1e-15));
}

TEST_CASE("probabilities stay inside (0,1)") {
    auto instances = random_instances(200, 8, 3);
    BoostParams p = small_params();
    Ensemble model = train(instances, p);
    for (const WeightedInstance& inst : instances) {
        double proba = model.predict_proba(inst.features());
        CHECK(proba > 0.0);
        CHECK(proba < 1.0);
    }
}

TEST_CASE("compression equivalence: weighted rows vs expanded daily rows, bitwise") {
    Rng rng(9);
    for (std::uint64_t fixture = 0; fixture < 3; ++fixture) {
        std::vector<WeightedInstance> compressed, daily;
        for (int i = 0; i < 60; ++i) {
            FeatureVector v;
            v.set(0, static_cast<double>(rng.below(400)));  // an age-like value
            for (int f = 1; f < 12; ++f) {
                if (rng.uniform() < 0.4) v.set(static_cast<std::uint32_t>(f), 1.0);
            }
            int exposure = 1 + static_cast<int>(rng.below(49));
            int exploited = static_cast<int>(rng.below(static_cast<std::uint64_t>(exposure + 1)));
            compressed.push_back(WeightedInstance::from_counts(v, exploited, exposure));
            for (int d = 0; d < exposure; ++d)
                daily.push_back(WeightedInstance::from_counts(v, d < exploited ? 1.0 : 0.0, 1.0));
        }
        BoostParams p = small_params();
        p.rounds = 12;
        p.max_depth = 6;
        p.seed = fixture;
        Ensemble a = train(compressed, p, "fp");
        Ensemble b = train(daily, p, "fp");
        CHECK(a.to_json() == b.to_json());  // bitwise-identical ensembles
    }
}

TEST_CASE("thread count does not change the artifact") {
    auto instances = random_instances(400, 20, 17);
    BoostParams p = small_params();
    p.rounds = 8;
    p.subsample = 0.75;
    p.seed = 5;
    Ensemble reference = train(instances, p, "fp", 1);
    for (int threads : {4, 8}) {
        Ensemble other = train(instances, p, "fp", threads);
        CHECK(reference.to_json() == other.to_json());
    }
}

TEST_CASE("same seed same model, different seed different subsample path") {
    auto instances = random_instances(300, 10, 23);
    BoostParams p = small_params();
    p.subsample = 0.6;
    p.seed = 1;
    Ensemble a = train(instances, p);
    Ensemble b = train(instances, p);
    CHECK(a.to_json() == b.to_json());
    p.seed = 2;
    Ensemble c = train(instances, p);
    CHECK(a.to_json() != c.to_json());
}

TEST_CASE("training loss is non-increasing per round with subsample=1") {
    auto instances = random_instances(300, 10, 29);
    BoostParams p = small_params();
    p.rounds = 20;
    Ensemble model = train(instances, p);
    // Replay margins round by round.
    std::vector<double> margins(instances.size(), model.base_margin);
    auto loss = [&]() {
        double total = 0;
        for (std::size_t i = 0; i < instances.size(); ++i)
            total += logistic_loss(margins[i], instances[i].target(), instances[i].weight());
        return total;
    };
    double previous = loss();
    for (const Tree& tree : model.trees) {
        for (std::size_t i = 0; i < instances.size(); ++i)
            margins[i] += tree.value_for(instances[i].features());
        double current = loss();
        CHECK(current <= previous + 1e-9);
        previous = current;
    }
}

TEST_CASE("cover bookkeeping: parent = left + right, exactly") {
    auto instances = random_instances(500, 15, 31);
    BoostParams p = small_params();
    p.rounds = 6;
    p.max_depth = 8;
    Ensemble model = train(instances, p);
    int internal_nodes = 0;
    for (const Tree& tree : model.trees) {
        for (const TreeNode& node : tree.nodes) {
            if (node.is_leaf()) continue;
            ++internal_nodes;
            double sum = tree.nodes[static_cast<std::size_t>(node.left)].cover +
                         tree.nodes[static_cast<std::size_t>(node.right)].cover;
            CHECK(node.cover == sum);  // exact by construction
        }
    }
    CHECK(internal_nodes > 0);
}

TEST_CASE("max_delta_step clips the unscaled leaf weight") {
    std::vector<WeightedInstance> instances;
    for (int i = 0; i < 30; ++i) {
        FeatureVector v;
        if (i < 15) v.set(0, 1.0);
        instances.push_back(WeightedInstance::from_counts(v, i < 15 ? 1.0 : 0.0, 1.0));
    }
    BoostParams p = small_params();
    p.learning_rate = 1.0;
    p.rounds = 1;
    p.lambda = 0.0;
    p.max_delta_step = 0.05;
    Ensemble model = train(instances, p);
    for (const Tree& tree : model.trees) {
        for (const TreeNode& node : tree.nodes) {
            if (node.is_leaf()) CHECK(std::abs(node.value) <= 0.05 + 1e-15);
        }
    }
}

TEST_CASE("explicit zero routes by threshold, absent routes by default") {
    // Group A: feature 0 explicitly 0.0 (present), positive labels.
    // Group B: feature 0 absent, negative labels. A learner that conflates
    // them cannot separate these.
    std::vector<WeightedInstance> instances;
    for (int i = 0; i < 20; ++i) {
        FeatureVector with_zero;
        with_zero.set(0, 0.0);
        instances.push_back(WeightedInstance::from_counts(with_zero, 1.0, 1.0));
        instances.push_back(WeightedInstance::from_counts(FeatureVector{}, 0.0, 1.0));
    }
    BoostParams p = small_params();
    p.rounds = 12;
    Ensemble model = train(instances, p);
    FeatureVector explicit_zero;
    explicit_zero.set(0, 0.0);
    CHECK(model.predict_proba(explicit_zero) > 0.9);
    CHECK(model.predict_proba(FeatureVector{}) < 0.1);
}

TEST_CASE("train rejects bad inputs") {
    CHECK_THROWS_AS(train({}, BoostParams{}), ValidationError);

    std::vector<WeightedInstance> nonfinite;
    FeatureVector v;
    v.set(0, std::numeric_limits<double>::quiet_NaN());
    nonfinite.push_back(WeightedInstance::from_counts(v, 0.0, 1.0));
    CHECK_THROWS_AS(train(nonfinite, BoostParams{}), ValidationError);

    std::vector<WeightedInstance> zero_weight;
    zero_weight.push_back(WeightedInstance::from_counts(FeatureVector{}, 0.0, 0.0));
    CHECK_THROWS_AS(train(zero_weight, BoostParams{}), ValidationError);

    BoostParams bad;
    bad.subsample = 0.0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
    bad = BoostParams{};
    bad.rounds = 0;
    CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("model artifact round-trips losslessly") {
    auto instances = random_instances(250, 12, 41);
    BoostParams p = small_params();
    p.subsample = 0.8;
    p.seed = 77;
    Ensemble model = train(instances, p, "deadbeef00112233");
    std::string first = model.to_json();
    Ensemble restored = Ensemble::from_json(first);
    CHECK(restored.to_json() == first);
    CHECK(restored.dictionary_fingerprint == "deadbeef00112233");
    for (const WeightedInstance& inst : instances) {
        CHECK(model.predict_margin(inst.features()) ==
              restored.predict_margin(inst.features()));
    }
    CHECK_THROWS_AS(Ensemble::from_json("{}"), Error);
    CHECK_THROWS_AS(Ensemble::from_json("not json"), Error);
}

TEST_CASE("squared objective fits a regression target") {
    Rng rng(55);
    std::vector<WeightedInstance> instances;
    for (int i = 0; i < 200; ++i) {
        FeatureVector v;
        double x = rng.uniform();
        v.set(0, x);
        instances.push_back(WeightedInstance(v, x > 0.5 ? 2.0 : -1.0, 1.0));
    }
    BoostParams p = small_params();
    p.objective = Objective::squared;
    p.rounds = 40;
    Ensemble model = train(instances, p);
    CHECK(model.predict_margin(fv({{0, 0.9}})) == doctest::Approx(2.0).epsilon(0.05));
    CHECK(model.predict_margin(fv({{0, 0.1}})) == doctest::Approx(-1.0).epsilon(0.1));
    CHECK_THROWS_AS(model.predict_proba(fv({{0, 0.9}})), Error);
}

TEST_CASE("prevalence base margin matches the weighted logit") {
    std::vector<WeightedInstance> instances;
    instances.push_back(WeightedInstance::from_counts(fv({{0, 1.0}}), 3.0, 10.0));
    instances.push_back(WeightedInstance::from_counts(fv({{1, 1.0}}), 1.0, 10.0));
    BoostParams p = small_params();
    p.rounds = 1;
    Ensemble model = train(instances, p);
    CHECK(model.base_margin == doctest::Approx(logit(0.2)).epsilon(1e-12));
    p.base_margin = -1.5;
    Ensemble fixed = train(instances, p);
    CHECK(fixed.base_margin == -1.5);
}

TEST_CASE("gain ties break toward the lowest feature index") {
    // Features 5 and 9 are exact duplicates; every split gain ties, so the
    // chosen split must use feature 5.
    std::vector<WeightedInstance> instances;
    for (int i = 0; i < 40; ++i) {
        FeatureVector v;
        if (i < 20) {
            v.set(5, 1.0);
            v.set(9, 1.0);
        }
        instances.push_back(WeightedInstance::from_counts(v, i < 20 ? 1.0 : 0.0, 1.0));
    }
    BoostParams p = small_params();
    p.rounds = 3;
    Ensemble model = train(instances, p);
    for (const Tree& tree : model.trees) {
        for (const TreeNode& node : tree.nodes) {
            if (!node.is_leaf()) CHECK(node.feature == 5);
        }
    }
}
