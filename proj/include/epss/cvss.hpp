#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace epss {

/// CVSSv3 base metrics in vector order.
enum class CvssV3Metric : int { AV = 0, AC, PR, UI, S, C, I, A };
inline constexpr int kCvssV3MetricCount = 8;

/// CVSSv2 base metrics in vector order.
enum class CvssV2Metric : int { AV = 0, AC, Au, C, I, A };
inline constexpr int kCvssV2MetricCount = 6;

const char* cvss_v3_metric_name(int metric);
const char* cvss_v2_metric_name(int metric);

/// Allowed value letters per metric, in canonical order.
std::string_view cvss_v3_metric_values(int metric);
std::string_view cvss_v2_metric_values(int metric);

/// A complete CVSSv3 base vector; values[m] indexes into cvss_v3_metric_values(m).
struct CvssV3Vector {
    std::array<std::int8_t, kCvssV3MetricCount> values{};

    static std::optional<CvssV3Vector> parse(std::string_view text);
    std::string to_string() const;
    bool operator==(const CvssV3Vector&) const = default;
};

struct CvssV2Vector {
    std::array<std::int8_t, kCvssV2MetricCount> values{};

    static std::optional<CvssV2Vector> parse(std::string_view text);
    std::string to_string() const;
    bool operator==(const CvssV2Vector&) const = default;
};

/// One-hot layouts: one indicator per (metric, value) pair, blocks laid out
/// in metric order. 22 slots for v3, 18 for v2.
inline constexpr int kCvssV3OneHotSize = 4 + 2 + 3 + 2 + 2 + 3 + 3 + 3;
inline constexpr int kCvssV2OneHotSize = 3 * 6;

int cvss_v3_one_hot_slot(int metric, int value_index);
int cvss_v2_one_hot_slot(int metric, int value_index);

/// Dictionary-facing name for a v3 one-hot slot, e.g. "cvss:AV:N".
std::string cvss_v3_slot_name(int slot);

}  // namespace epss
