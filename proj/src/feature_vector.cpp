#include "epss/feature_vector.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "epss/error.hpp"

namespace epss {

void FeatureVector::set(std::uint32_t index, double value) {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    if (it != entries_.end() && it->first == index) {
        it->second = value;
    } else {
        entries_.insert(it, {index, value});
    }
}

std::optional<double> FeatureVector::get(std::uint32_t index) const {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), index,
                               [](const Entry& e, std::uint32_t i) { return e.first < i; });
    if (it != entries_.end() && it->first == index) return it->second;
    return std::nullopt;
}

bool FeatureVector::all_finite() const {
    for (const Entry& e : entries_) {
        if (!std::isfinite(e.second)) return false;
    }
    return true;
}

bool FeatureVector::equal_ignoring(const FeatureVector& other, std::uint32_t ignored_index) const {
    auto a = entries_.begin(), ae = entries_.end();
    auto b = other.entries_.begin(), be = other.entries_.end();
    while (true) {
        while (a != ae && a->first == ignored_index) ++a;
        while (b != be && b->first == ignored_index) ++b;
        if (a == ae || b == be) return a == ae && b == be;
        if (a->first != b->first || a->second != b->second) return false;
        ++a;
        ++b;
    }
}

std::string FeatureVector::to_json() const {
    nlohmann::json obj = nlohmann::json::object();
    for (const Entry& e : entries_) obj[std::to_string(e.first)] = e.second;
    return obj.dump();
}

FeatureVector FeatureVector::from_json(const std::string& text) {
    nlohmann::json obj = nlohmann::json::parse(text, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw Error("invalid feature vector json");
    FeatureVector v;
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        v.set(static_cast<std::uint32_t>(std::stoul(it.key())), it.value().get<double>());
    }
    return v;
}

}  // namespace epss
