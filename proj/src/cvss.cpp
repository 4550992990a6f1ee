#include "epss/cvss.hpp"

#include <vector>

namespace epss {
namespace {

constexpr const char* kV3MetricNames[kCvssV3MetricCount] = {"AV", "AC", "PR", "UI",
                                                            "S",  "C",  "I",  "A"};
// Canonical value order per metric (CVSSv3.1 specification order).
constexpr std::string_view kV3MetricValues[kCvssV3MetricCount] = {
    "NALP",  // AV: Network, Adjacent, Local, Physical
    "LH",    // AC
    "NLH",   // PR
    "NR",    // UI
    "UC",    // S
    "HLN",   // C
    "HLN",   // I
    "HLN",   // A
};

constexpr const char* kV2MetricNames[kCvssV2MetricCount] = {"AV", "AC", "Au", "C", "I", "A"};
constexpr std::string_view kV2MetricValues[kCvssV2MetricCount] = {
    "NAL",  // AV: Network, Adjacent, Local
    "LMH",  // AC
    "NSM",  // Au: None, Single, Multiple
    "NPC",  // C: None, Partial, Complete
    "NPC",  // I
    "NPC",  // A
};

struct Part {
    std::string_view key;
    std::string_view value;
};

// Splits "AV:N/AC:L/..." into key:value parts; tolerates a "CVSS:x.y/" prefix.
bool split_vector(std::string_view text, std::vector<Part>& parts) {
    if (text.starts_with("CVSS:")) {
        auto slash = text.find('/');
        if (slash == std::string_view::npos) return false;
        text.remove_prefix(slash + 1);
    }
    while (!text.empty()) {
        auto slash = text.find('/');
        std::string_view piece = text.substr(0, slash);
        auto colon = piece.find(':');
        if (colon == std::string_view::npos || colon == 0 || colon + 1 >= piece.size())
            return false;
        parts.push_back({piece.substr(0, colon), piece.substr(colon + 1)});
        if (slash == std::string_view::npos) break;
        text.remove_prefix(slash + 1);
    }
    return true;
}

template <int N>
std::optional<std::array<std::int8_t, N>> parse_metrics(std::string_view text,
                                                        const char* const (&names)[N],
                                                        const std::string_view (&values)[N]) {
    std::vector<Part> parts;
    if (!split_vector(text, parts)) return std::nullopt;
    std::array<std::int8_t, N> out;
    out.fill(-1);
    for (const Part& p : parts) {
        int metric = -1;
        for (int m = 0; m < N; ++m) {
            if (p.key == names[m]) {
                metric = m;
                break;
            }
        }
        if (metric < 0) return std::nullopt;  // unknown metric key
        if (out[static_cast<std::size_t>(metric)] != -1) return std::nullopt;  // duplicate
        if (p.value.size() != 1) return std::nullopt;
        auto pos = values[metric].find(p.value[0]);
        if (pos == std::string_view::npos) return std::nullopt;
        out[static_cast<std::size_t>(metric)] = static_cast<std::int8_t>(pos);
    }
    for (int m = 0; m < N; ++m) {
        if (out[static_cast<std::size_t>(m)] < 0) return std::nullopt;  // incomplete vector
    }
    return out;
}

template <int N>
std::string format_metrics(const std::array<std::int8_t, N>& values,
                           const char* const (&names)[N], const std::string_view (&sets)[N]) {
    std::string out;
    for (int m = 0; m < N; ++m) {
        if (m) out += '/';
        out += names[m];
        out += ':';
        out += sets[m][static_cast<std::size_t>(values[static_cast<std::size_t>(m)])];
    }
    return out;
}

}  // namespace

const char* cvss_v3_metric_name(int metric) { return kV3MetricNames[metric]; }
const char* cvss_v2_metric_name(int metric) { return kV2MetricNames[metric]; }
std::string_view cvss_v3_metric_values(int metric) { return kV3MetricValues[metric]; }
std::string_view cvss_v2_metric_values(int metric) { return kV2MetricValues[metric]; }

std::optional<CvssV3Vector> CvssV3Vector::parse(std::string_view text) {
    auto values = parse_metrics<kCvssV3MetricCount>(text, kV3MetricNames, kV3MetricValues);
    if (!values) return std::nullopt;
    return CvssV3Vector{*values};
}

std::string CvssV3Vector::to_string() const {
    return format_metrics<kCvssV3MetricCount>(values, kV3MetricNames, kV3MetricValues);
}

std::optional<CvssV2Vector> CvssV2Vector::parse(std::string_view text) {
    auto values = parse_metrics<kCvssV2MetricCount>(text, kV2MetricNames, kV2MetricValues);
    if (!values) return std::nullopt;
    return CvssV2Vector{*values};
}

std::string CvssV2Vector::to_string() const {
    return format_metrics<kCvssV2MetricCount>(values, kV2MetricNames, kV2MetricValues);
}

int cvss_v3_one_hot_slot(int metric, int value_index) {
    int base = 0;
    for (int m = 0; m < metric; ++m) base += static_cast<int>(kV3MetricValues[m].size());
    return base + value_index;
}

int cvss_v2_one_hot_slot(int metric, int value_index) {
    return metric * 3 + value_index;
}

std::string cvss_v3_slot_name(int slot) {
    for (int m = 0; m < kCvssV3MetricCount; ++m) {
        int size = static_cast<int>(kV3MetricValues[m].size());
        if (slot < size) {
            std::string name = "cvss:";
            name += kV3MetricNames[m];
            name += ':';
            name += kV3MetricValues[m][static_cast<std::size_t>(slot)];
            return name;
        }
        slot -= size;
    }
    return {};
}

}  // namespace epss
