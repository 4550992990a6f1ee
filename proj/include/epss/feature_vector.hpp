#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace epss {

/// Sparse feature vector: (index, value) pairs sorted by index, no duplicate
/// indices, finite values. Absent entries are "missing" to the tree model;
/// an explicit 0.0 entry is a present value.
class FeatureVector {
public:
    using Entry = std::pair<std::uint32_t, double>;

    FeatureVector() = default;

    /// Sets index to value (inserting or overwriting).
    void set(std::uint32_t index, double value);

    std::optional<double> get(std::uint32_t index) const;
    bool present(std::uint32_t index) const { return get(index).has_value(); }

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    bool all_finite() const;

    /// Exact equality of index/value pairs.
    bool operator==(const FeatureVector& other) const { return entries_ == other.entries_; }

    /// Lexicographic order over entries; total as long as values are finite
    /// (the pipeline never produces NaN). Used as the canonical group key in
    /// the tree trainer and for stable output ordering.
    bool operator<(const FeatureVector& other) const { return entries_ < other.entries_; }

    /// Equality ignoring one index (used by run compression to compare daily
    /// vectors modulo the age feature).
    bool equal_ignoring(const FeatureVector& other, std::uint32_t ignored_index) const;

    std::string to_json() const;
    static FeatureVector from_json(const std::string& text);

private:
    std::vector<Entry> entries_;
};

}  // namespace epss
