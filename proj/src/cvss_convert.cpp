#include "epss/cvss_convert.hpp"

#include <json.hpp>

#include "epss/error.hpp"
#include "epss/rng.hpp"

namespace epss {

using nlohmann::json;

FeatureVector cvss_v2_one_hot(const CvssV2Vector& v) {
    FeatureVector x;
    for (int m = 0; m < kCvssV2MetricCount; ++m) {
        x.set(static_cast<std::uint32_t>(
                  cvss_v2_one_hot_slot(m, v.values[static_cast<std::size_t>(m)])),
              1.0);
    }
    return x;
}

CvssConversionModel CvssConversionModel::train(
    const std::vector<std::pair<CvssV2Vector, CvssV3Vector>>& pairs, std::uint64_t seed,
    const Params& params) {
    if (pairs.empty()) throw ValidationError("cvss converter: no training pairs");
    CvssConversionModel model;
    model.trained_ = true;
    model.training_pairs_ = pairs.size();

    for (const auto& [v2, v3] : pairs) {
        (void)v3;
        for (int m = 0; m < kCvssV2MetricCount; ++m)
            model.seen_[static_cast<std::size_t>(m)]
                       [static_cast<std::size_t>(v2.values[static_cast<std::size_t>(m)])] = true;
    }

    std::vector<FeatureVector> inputs;
    inputs.reserve(pairs.size());
    for (const auto& [v2, v3] : pairs) inputs.push_back(cvss_v2_one_hot(v2));

    for (int m = 0; m < kCvssV3MetricCount; ++m) {
        const int n_values = static_cast<int>(cvss_v3_metric_values(m).size());
        // Majority class, ties to the lower value index.
        std::vector<std::int64_t> counts(static_cast<std::size_t>(n_values), 0);
        for (const auto& [v2, v3] : pairs)
            ++counts[static_cast<std::size_t>(v3.values[static_cast<std::size_t>(m)])];
        int best = 0;
        for (int v = 1; v < n_values; ++v)
            if (counts[static_cast<std::size_t>(v)] > counts[static_cast<std::size_t>(best)])
                best = v;
        model.majority_[static_cast<std::size_t>(m)] = static_cast<std::int8_t>(best);

        for (int v = 0; v < n_values; ++v) {
            std::vector<WeightedInstance> instances;
            instances.reserve(pairs.size());
            for (std::size_t i = 0; i < pairs.size(); ++i) {
                double label = pairs[i].second.values[static_cast<std::size_t>(m)] == v ? 1.0 : 0.0;
                instances.push_back(WeightedInstance::from_counts(inputs[i], label, 1.0));
            }
            BoostParams bp = params.boost;
            bp.seed = derive_seed(seed, "cvss_convert",
                                  static_cast<std::uint64_t>(m * 8 + v));
            model.classifiers_[static_cast<std::size_t>(m)].push_back(
                epss::train(instances, bp));
        }
    }
    return model;
}

CvssV3Vector CvssConversionModel::convert(const CvssV2Vector& input, bool* used_fallback) const {
    if (!trained_) throw Error("cvss converter: model not trained");
    bool unseen = false;
    for (int m = 0; m < kCvssV2MetricCount; ++m) {
        if (!seen_[static_cast<std::size_t>(m)]
                  [static_cast<std::size_t>(input.values[static_cast<std::size_t>(m)])])
            unseen = true;
    }
    CvssV3Vector out;
    if (unseen) {
        // Graceful fallback: most frequent training class per metric.
        out.values = majority_;
        if (used_fallback) *used_fallback = true;
        return out;
    }
    if (used_fallback) *used_fallback = false;
    FeatureVector x = cvss_v2_one_hot(input);
    for (int m = 0; m < kCvssV3MetricCount; ++m) {
        const auto& clfs = classifiers_[static_cast<std::size_t>(m)];
        int best = 0;
        double best_margin = clfs[0].predict_margin(x);
        for (int v = 1; v < static_cast<int>(clfs.size()); ++v) {
            double margin = clfs[static_cast<std::size_t>(v)].predict_margin(x);
            if (margin > best_margin) {
                best_margin = margin;
                best = v;
            }
        }
        out.values[static_cast<std::size_t>(m)] = static_cast<std::int8_t>(best);
    }
    return out;
}

std::string CvssConversionModel::to_json() const {
    json obj;
    obj["format"] = "epss.cvss_convert";
    obj["version"] = 1;
    obj["training_pairs"] = training_pairs_;
    json majority = json::array();
    for (int m = 0; m < kCvssV3MetricCount; ++m)
        majority.push_back(static_cast<int>(majority_[static_cast<std::size_t>(m)]));
    obj["majority"] = majority;
    json seen = json::array();
    for (int m = 0; m < kCvssV2MetricCount; ++m) {
        json row = json::array();
        for (int v = 0; v < 3; ++v)
            row.push_back(seen_[static_cast<std::size_t>(m)][static_cast<std::size_t>(v)] ? 1 : 0);
        seen.push_back(row);
    }
    obj["seen"] = seen;
    json clfs = json::array();
    for (int m = 0; m < kCvssV3MetricCount; ++m) {
        json row = json::array();
        for (const Ensemble& e : classifiers_[static_cast<std::size_t>(m)])
            row.push_back(json::parse(e.to_json()));
        clfs.push_back(row);
    }
    obj["classifiers"] = clfs;
    return obj.dump();
}

CvssConversionModel CvssConversionModel::from_json(const std::string& text) {
    json obj = json::parse(text, nullptr, false);
    if (obj.is_discarded() || obj.value("format", "") != "epss.cvss_convert")
        throw Error("cvss converter artifact: invalid format");
    CvssConversionModel model;
    model.trained_ = true;
    model.training_pairs_ = obj.at("training_pairs").get<std::size_t>();
    for (int m = 0; m < kCvssV3MetricCount; ++m)
        model.majority_[static_cast<std::size_t>(m)] =
            static_cast<std::int8_t>(obj.at("majority").at(static_cast<std::size_t>(m)).get<int>());
    for (int m = 0; m < kCvssV2MetricCount; ++m)
        for (int v = 0; v < 3; ++v)
            model.seen_[static_cast<std::size_t>(m)][static_cast<std::size_t>(v)] =
                obj.at("seen").at(static_cast<std::size_t>(m)).at(static_cast<std::size_t>(v))
                    .get<int>() != 0;
    for (int m = 0; m < kCvssV3MetricCount; ++m) {
        for (const json& ej : obj.at("classifiers").at(static_cast<std::size_t>(m)))
            model.classifiers_[static_cast<std::size_t>(m)].push_back(
                Ensemble::from_json(ej.dump()));
    }
    return model;
}

}  // namespace epss
