#include "epss/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "epss/error.hpp"
#include "epss/parallel.hpp"
#include "epss/rng.hpp"

namespace epss {

using nlohmann::json;

double sigmoid(double x) {
    if (x >= 0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

double logistic_loss(double margin, double target, double weight) {
    // log(1 + e^m), evaluated stably on both sides.
    double softplus = margin > 0 ? margin + std::log1p(std::exp(-margin))
                                 : std::log1p(std::exp(margin));
    return weight * (-target * margin + softplus);
}

double logistic_grad(double margin, double target, double weight) {
    return weight * (sigmoid(margin) - target);
}

double logistic_hess(double margin, double target, double weight) {
    (void)target;
    double p = sigmoid(margin);
    return weight * p * (1.0 - p);
}

void BoostParams::validate() const {
    if (!(learning_rate > 0)) throw ValidationError("learning_rate must be > 0");
    if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
    if (!(subsample > 0) || subsample > 1) throw ValidationError("subsample must be in (0, 1]");
    if (rounds < 1) throw ValidationError("rounds must be >= 1");
    if (gamma < 0) throw ValidationError("gamma must be >= 0");
    if (max_delta_step < 0) throw ValidationError("max_delta_step must be >= 0");
    if (lambda < 0) throw ValidationError("lambda must be >= 0");
    if (min_child_weight < 0) throw ValidationError("min_child_weight must be >= 0");
}

std::int32_t Tree::route(const FeatureVector& x) const {
    std::int32_t node = 0;
    while (!nodes[static_cast<std::size_t>(node)].is_leaf()) {
        const TreeNode& n = nodes[static_cast<std::size_t>(node)];
        auto v = x.get(static_cast<std::uint32_t>(n.feature));
        if (v.has_value()) {
            node = *v < n.threshold ? n.left : n.right;
        } else {
            node = n.default_left ? n.left : n.right;
        }
    }
    return node;
}

int Tree::depth() const {
    // Depth of the deepest leaf; a lone root is depth 0.
    std::vector<int> depths(nodes.size(), 0);
    int deepest = 0;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i].is_leaf()) {
            depths[static_cast<std::size_t>(nodes[i].left)] = depths[i] + 1;
            depths[static_cast<std::size_t>(nodes[i].right)] = depths[i] + 1;
        } else {
            deepest = std::max(deepest, depths[i]);
        }
    }
    return deepest;
}

double Ensemble::predict_margin(const FeatureVector& x) const {
    double margin = base_margin;
    for (const Tree& t : trees) margin += t.value_for(x);
    return margin;
}

double Ensemble::predict_proba(const FeatureVector& x) const {
    if (params.objective != Objective::logistic)
        throw Error("predict_proba requires the logistic objective");
    return sigmoid(predict_margin(x));
}

namespace {

constexpr const char* kFormatTag = "epss.gbt";
constexpr int kFormatVersion = 1;

struct Group {
    FeatureVector features;
    std::vector<std::uint32_t> members;  // instance indices
    double weight_full = 0.0;
    double positive_full = 0.0;
};

struct NodeStats {
    double g = 0.0;
    double h = 0.0;
};

struct Candidate {
    double gain = 0.0;
    double threshold = 0.0;
    bool default_left = false;
    bool valid = false;
};

struct ColumnEntry {
    double value;
    std::uint32_t group;
};

double split_score(double g, double h, double lambda) {
    double denom = h + lambda;
    if (denom <= 0) return 0.0;
    return g * g / denom;
}

}  // namespace

Ensemble train(std::span<const WeightedInstance> instances, const BoostParams& params,
               std::string_view dictionary_fingerprint, int threads) {
    params.validate();
    if (instances.empty()) throw ValidationError("train: empty instance list");
    for (const WeightedInstance& inst : instances) {
        if (!inst.features().all_finite()) throw ValidationError("train: non-finite feature value");
        if (!(inst.weight() > 0) || !std::isfinite(inst.weight()))
            throw ValidationError("train: instance weight must be positive and finite");
        if (params.objective == Objective::logistic &&
            (inst.positive_mass() < 0 || inst.positive_mass() > inst.weight()))
            throw ValidationError("train: logistic target must lie in [0, 1]");
    }
    if (threads < 1) threads = 1;

    const std::uint32_t n = static_cast<std::uint32_t>(instances.size());

    // Canonicalize: pool instances sharing a feature vector. All loss sums
    // below run over groups in this fixed order, so results do not depend on
    // how the caller bundled identical examples.
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
        const FeatureVector& fa = instances[a].features();
        const FeatureVector& fb = instances[b].features();
        if (fa < fb) return true;
        if (fb < fa) return false;
        return a < b;
    });
    std::vector<Group> groups;
    for (std::uint32_t idx : order) {
        if (groups.empty() || !(groups.back().features == instances[idx].features())) {
            Group g;
            g.features = instances[idx].features();
            groups.push_back(std::move(g));
        }
        Group& g = groups.back();
        g.members.push_back(idx);
        g.weight_full += instances[idx].weight();
        g.positive_full += instances[idx].positive_mass();
    }
    const std::uint32_t n_groups = static_cast<std::uint32_t>(groups.size());

    double total_weight = 0.0, total_positive = 0.0;
    for (const Group& g : groups) {
        total_weight += g.weight_full;
        total_positive += g.positive_full;
    }

    Ensemble model;
    model.params = params;
    model.dictionary_fingerprint = std::string(dictionary_fingerprint);
    if (params.base_margin) {
        model.base_margin = *params.base_margin;
    } else if (params.objective == Objective::logistic) {
        double prevalence = total_positive / total_weight;
        prevalence = std::clamp(prevalence, 1e-6, 1.0 - 1e-6);
        model.base_margin = logit(prevalence);
    } else {
        model.base_margin = total_positive / total_weight;
    }

    // Sorted per-feature columns over groups.
    std::vector<std::pair<std::uint32_t, std::vector<ColumnEntry>>> columns;
    {
        std::vector<std::pair<std::uint32_t, ColumnEntry>> flat;
        for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
            for (const auto& [feat, value] : groups[gi].features.entries())
                flat.push_back({feat, {value, gi}});
        }
        std::sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            if (a.second.value != b.second.value) return a.second.value < b.second.value;
            return a.second.group < b.second.group;
        });
        for (const auto& [feat, entry] : flat) {
            if (columns.empty() || columns.back().first != feat) columns.push_back({feat, {}});
            columns.back().second.push_back(entry);
        }
    }

    std::vector<double> margins(n_groups, model.base_margin);
    std::vector<double> group_weight(n_groups), group_positive(n_groups);
    std::vector<double> group_g(n_groups), group_h(n_groups);
    std::vector<std::int32_t> node_of(n_groups);
    std::vector<char> sampled(n);

    for (int round = 0; round < params.rounds; ++round) {
        // Row subsampling: instances chosen without replacement, full weight kept.
        if (params.subsample >= 1.0) {
            std::fill(sampled.begin(), sampled.end(), 1);
        } else {
            std::fill(sampled.begin(), sampled.end(), 0);
            auto k = static_cast<std::uint32_t>(std::llround(params.subsample * n));
            k = std::clamp<std::uint32_t>(k, 1, n);
            Rng rng(derive_seed(params.seed, "gbt.subsample", static_cast<std::uint64_t>(round)));
            for (std::uint32_t idx : rng.sample_indices(n, k)) sampled[idx] = 1;
        }
        for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
            double w = 0.0, p = 0.0;
            for (std::uint32_t m : groups[gi].members) {
                if (sampled[m]) {
                    w += instances[m].weight();
                    p += instances[m].positive_mass();
                }
            }
            group_weight[gi] = w;
            group_positive[gi] = p;
        }

        parallel_for(n_groups, threads, [&](std::size_t gi) {
            double w = group_weight[gi];
            if (w <= 0) {
                group_g[gi] = 0.0;
                group_h[gi] = 0.0;
                return;
            }
            if (params.objective == Objective::logistic) {
                double p = sigmoid(margins[gi]);
                double wp = w * p;
                group_g[gi] = wp - group_positive[gi];
                group_h[gi] = wp * (1.0 - p);
            } else {
                group_g[gi] = w * margins[gi] - group_positive[gi];
                group_h[gi] = w;
            }
        });

        Tree tree;
        tree.nodes.push_back(TreeNode{});
        std::vector<NodeStats> stats(1);
        for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
            if (group_weight[gi] <= 0) {
                node_of[gi] = -1;
                continue;
            }
            node_of[gi] = 0;
            stats[0].g += group_g[gi];
            stats[0].h += group_h[gi];
        }
        tree.nodes[0].cover = stats[0].h;

        std::vector<std::int32_t> frontier{0};
        for (int depth = 0; depth < params.max_depth && !frontier.empty(); ++depth) {
            const std::size_t n_slots = frontier.size();
            std::vector<std::int32_t> slot_of(tree.nodes.size(), -1);
            for (std::size_t s = 0; s < n_slots; ++s)
                slot_of[static_cast<std::size_t>(frontier[s])] = static_cast<std::int32_t>(s);

            // Per-feature best candidate per frontier slot.
            std::vector<std::vector<Candidate>> per_feature(columns.size());
            parallel_for(columns.size(), threads, [&](std::size_t ci) {
                const auto& [feat, col] = columns[ci];
                (void)feat;
                std::vector<Candidate>& best = per_feature[ci];
                best.assign(n_slots, Candidate{});

                // Pass A: per-slot totals over groups where the feature is present.
                std::vector<NodeStats> present(n_slots);
                for (const ColumnEntry& e : col) {
                    std::int32_t node = node_of[e.group];
                    if (node < 0) continue;
                    std::int32_t s = slot_of[static_cast<std::size_t>(node)];
                    if (s < 0) continue;
                    present[static_cast<std::size_t>(s)].g += group_g[e.group];
                    present[static_cast<std::size_t>(s)].h += group_h[e.group];
                }

                // Pass B: boundary scan in ascending value order.
                struct Scan {
                    double cum_g = 0.0, cum_h = 0.0, prev_value = 0.0;
                    bool started = false;
                };
                std::vector<Scan> scan(n_slots);
                auto consider = [&](std::size_t s, double threshold, double gl, double hl,
                                    double gr, double hr, double gn, double hn,
                                    bool default_left) {
                    if (hl < params.min_child_weight || hr < params.min_child_weight) return;
                    double gain = 0.5 * (split_score(gl, hl, params.lambda) +
                                         split_score(gr, hr, params.lambda) -
                                         split_score(gn, hn, params.lambda)) -
                                  params.gamma;
                    Candidate& b = best[s];
                    if (!b.valid || gain > b.gain) {
                        b = Candidate{gain, threshold, default_left, true};
                    }
                };
                for (const ColumnEntry& e : col) {
                    std::int32_t node = node_of[e.group];
                    if (node < 0) continue;
                    std::int32_t si = slot_of[static_cast<std::size_t>(node)];
                    if (si < 0) continue;
                    std::size_t s = static_cast<std::size_t>(si);
                    Scan& sc = scan[s];
                    if (sc.started && e.value != sc.prev_value) {
                        double thr = 0.5 * (sc.prev_value + e.value);
                        if (!(sc.prev_value < thr)) thr = e.value;
                        const NodeStats& tot = stats[static_cast<std::size_t>(node)];
                        const NodeStats& pres = present[s];
                        double gm = tot.g - pres.g;
                        double hm = tot.h - pres.h;
                        // Missing routed right.
                        consider(s, thr, sc.cum_g, sc.cum_h, tot.g - sc.cum_g, tot.h - sc.cum_h,
                                 tot.g, tot.h, false);
                        // Missing routed left.
                        consider(s, thr, sc.cum_g + gm, sc.cum_h + hm, pres.g - sc.cum_g,
                                 pres.h - sc.cum_h, tot.g, tot.h, true);
                    }
                    sc.cum_g += group_g[e.group];
                    sc.cum_h += group_h[e.group];
                    sc.prev_value = e.value;
                    sc.started = true;
                }
                // End candidate past the last value: separates present from
                // missing (the only split available to single-valued
                // features, e.g. sparse binaries).
                for (std::size_t s = 0; s < n_slots; ++s) {
                    const Scan& sc = scan[s];
                    if (!sc.started) continue;
                    double thr = sc.prev_value + 1.0;
                    if (!(sc.prev_value < thr)) continue;
                    const NodeStats& tot = stats[static_cast<std::size_t>(frontier[s])];
                    const NodeStats& pres = present[s];
                    double gm = tot.g - pres.g;
                    double hm = tot.h - pres.h;
                    consider(s, thr, sc.cum_g, sc.cum_h, tot.g - sc.cum_g, tot.h - sc.cum_h,
                             tot.g, tot.h, false);
                    consider(s, thr, sc.cum_g + gm, sc.cum_h + hm, pres.g - sc.cum_g,
                             pres.h - sc.cum_h, tot.g, tot.h, true);
                }
            });

            // Reduce in ascending feature order: ties keep the lowest feature
            // index, then the lowest threshold, then missing-right.
            std::vector<Candidate> chosen(n_slots);
            std::vector<std::int32_t> chosen_feature(n_slots, -1);
            for (std::size_t ci = 0; ci < columns.size(); ++ci) {
                for (std::size_t s = 0; s < n_slots; ++s) {
                    const Candidate& c = per_feature[ci][s];
                    if (!c.valid) continue;
                    if (!chosen[s].valid || c.gain > chosen[s].gain) {
                        chosen[s] = c;
                        chosen_feature[s] = static_cast<std::int32_t>(columns[ci].first);
                    }
                }
            }

            std::vector<std::int32_t> next_frontier;
            for (std::size_t s = 0; s < n_slots; ++s) {
                if (!chosen[s].valid || !(chosen[s].gain > 0)) continue;
                const std::int32_t node = frontier[s];
                const std::int32_t left = static_cast<std::int32_t>(tree.nodes.size());
                const std::int32_t right = left + 1;
                {
                    TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
                    nd.feature = chosen_feature[s];
                    nd.threshold = chosen[s].threshold;
                    nd.default_left = chosen[s].default_left;
                    nd.left = left;
                    nd.right = right;
                }  // reference dies before the vector may reallocate
                tree.nodes.push_back(TreeNode{});
                tree.nodes.push_back(TreeNode{});
                stats.resize(tree.nodes.size());
                next_frontier.push_back(left);
                next_frontier.push_back(right);
            }
            if (next_frontier.empty()) break;

            // Partition groups into the new children, in canonical group order.
            for (std::uint32_t gi = 0; gi < n_groups; ++gi) {
                std::int32_t node = node_of[gi];
                if (node < 0) continue;
                const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
                if (nd.is_leaf()) continue;
                auto v = groups[gi].features.get(static_cast<std::uint32_t>(nd.feature));
                std::int32_t child;
                if (v.has_value()) {
                    child = *v < nd.threshold ? nd.left : nd.right;
                } else {
                    child = nd.default_left ? nd.left : nd.right;
                }
                node_of[gi] = child;
                stats[static_cast<std::size_t>(child)].g += group_g[gi];
                stats[static_cast<std::size_t>(child)].h += group_h[gi];
            }
            for (std::int32_t child : next_frontier)
                tree.nodes[static_cast<std::size_t>(child)].cover =
                    stats[static_cast<std::size_t>(child)].h;
            frontier = std::move(next_frontier);
        }

        // Leaf values: Newton step, clipped, then shrunk by the learning rate.
        for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
            TreeNode& nd = tree.nodes[i];
            if (!nd.is_leaf()) continue;
            double denom = stats[i].h + params.lambda;
            double w = denom > 0 ? -stats[i].g / denom : 0.0;
            if (params.max_delta_step > 0)
                w = std::clamp(w, -params.max_delta_step, params.max_delta_step);
            nd.value = params.learning_rate * w;
        }

        // Covers of internal nodes regenerated bottom-up so that
        // cover(parent) == cover(left) + cover(right) holds exactly.
        for (std::size_t i = tree.nodes.size(); i-- > 0;) {
            TreeNode& nd = tree.nodes[i];
            if (!nd.is_leaf())
                nd.cover = tree.nodes[static_cast<std::size_t>(nd.left)].cover +
                           tree.nodes[static_cast<std::size_t>(nd.right)].cover;
        }

        parallel_for(n_groups, threads, [&](std::size_t gi) {
            margins[gi] += tree.value_for(groups[gi].features);
        });
        model.trees.push_back(std::move(tree));
    }

    return model;
}

std::string Ensemble::to_json() const {
    json obj;
    obj["format"] = kFormatTag;
    obj["version"] = kFormatVersion;
    json p;
    p["learning_rate"] = params.learning_rate;
    p["max_depth"] = params.max_depth;
    p["subsample"] = params.subsample;
    p["gamma"] = params.gamma;
    p["max_delta_step"] = params.max_delta_step;
    p["rounds"] = params.rounds;
    p["lambda"] = params.lambda;
    p["min_child_weight"] = params.min_child_weight;
    p["objective"] = params.objective == Objective::logistic ? "logistic" : "squared";
    if (params.base_margin) p["base_margin"] = *params.base_margin;
    p["seed"] = params.seed;
    obj["params"] = p;
    obj["base_margin"] = base_margin;
    obj["dictionary_fingerprint"] = dictionary_fingerprint;
    json trees_json = json::array();
    for (const Tree& t : trees) {
        json nodes = json::array();
        for (const TreeNode& nd : t.nodes) {
            nodes.push_back(json::array({nd.feature, nd.threshold, nd.default_left ? 1 : 0,
                                         nd.left, nd.right, nd.value, nd.cover}));
        }
        trees_json.push_back({{"nodes", nodes}});
    }
    obj["trees"] = trees_json;
    return obj.dump();
}

Ensemble Ensemble::from_json(const std::string& s) {
    json obj = json::parse(s, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw Error("model artifact: invalid json");
    if (obj.value("format", "") != kFormatTag) throw Error("model artifact: unknown format");
    if (obj.value("version", -1) != kFormatVersion) throw Error("model artifact: unknown version");
    Ensemble model;
    const json& p = obj.at("params");
    model.params.learning_rate = p.at("learning_rate").get<double>();
    model.params.max_depth = p.at("max_depth").get<int>();
    model.params.subsample = p.at("subsample").get<double>();
    model.params.gamma = p.at("gamma").get<double>();
    model.params.max_delta_step = p.at("max_delta_step").get<double>();
    model.params.rounds = p.at("rounds").get<int>();
    model.params.lambda = p.at("lambda").get<double>();
    model.params.min_child_weight = p.at("min_child_weight").get<double>();
    model.params.objective =
        p.at("objective").get<std::string>() == "squared" ? Objective::squared
                                                          : Objective::logistic;
    if (p.contains("base_margin")) model.params.base_margin = p.at("base_margin").get<double>();
    model.params.seed = p.at("seed").get<std::uint64_t>();
    model.base_margin = obj.at("base_margin").get<double>();
    model.dictionary_fingerprint = obj.value("dictionary_fingerprint", "");
    for (const json& tj : obj.at("trees")) {
        Tree t;
        for (const json& nj : tj.at("nodes")) {
            TreeNode nd;
            nd.feature = nj.at(0).get<std::int32_t>();
            nd.threshold = nj.at(1).get<double>();
            nd.default_left = nj.at(2).get<int>() != 0;
            nd.left = nj.at(3).get<std::int32_t>();
            nd.right = nj.at(4).get<std::int32_t>();
            nd.value = nj.at(5).get<double>();
            nd.cover = nj.at(6).get<double>();
            t.nodes.push_back(nd);
        }
        if (t.nodes.empty()) throw Error("model artifact: empty tree");
        model.trees.push_back(std::move(t));
    }
    return model;
}

}  // namespace epss
