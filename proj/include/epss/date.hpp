#pragma once

#include <cstdint>
#include <cstdio>
#include <compare>
#include <optional>
#include <string>
#include <string_view>

namespace epss {

/// UTC calendar date with day granularity, stored as days since 1970-01-01.
/// All window arithmetic in the pipeline is in whole days.
class Date {
public:
    Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}

    static constexpr Date from_civil(int y, unsigned m, unsigned d) {
        // Howard Hinnant's days_from_civil.
        y -= m <= 2;
        const int era = (y >= 0 ? y : y - 399) / 400;
        const unsigned yoe = static_cast<unsigned>(y - era * 400);
        const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
        const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
        return Date(era * 146097 + static_cast<std::int32_t>(doe) - 719468);
    }

    struct Civil {
        int year;
        unsigned month;
        unsigned day;
    };

    constexpr Civil civil() const {
        std::int32_t z = days_ + 719468;
        const std::int32_t era = (z >= 0 ? z : z - 146096) / 146097;
        const unsigned doe = static_cast<unsigned>(z - era * 146097);
        const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
        const std::int32_t y = static_cast<std::int32_t>(yoe) + era * 400;
        const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
        const unsigned mp = (5 * doy + 2) / 153;
        const unsigned d = doy - (153 * mp + 2) / 5 + 1;
        const unsigned m = mp + (mp < 10 ? 3 : -9);
        return {y + (m <= 2), m, d};
    }

    /// Parses strict "YYYY-MM-DD"; rejects impossible calendar dates.
    static std::optional<Date> parse(std::string_view s) {
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        int y = 0;
        unsigned m = 0, d = 0;
        for (int i : {0, 1, 2, 3}) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            y = y * 10 + (s[i] - '0');
        }
        for (int i : {5, 6}) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            m = m * 10 + static_cast<unsigned>(s[i] - '0');
        }
        for (int i : {8, 9}) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            d = d * 10 + static_cast<unsigned>(s[i] - '0');
        }
        if (m < 1 || m > 12 || d < 1 || d > 31) return std::nullopt;
        Date candidate = from_civil(y, m, d);
        Civil back = candidate.civil();
        if (back.year != y || back.month != m || back.day != d) return std::nullopt;
        return candidate;
    }

    std::string to_string() const {
        Civil c = civil();
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", c.year, c.month, c.day);
        return buf;
    }

    constexpr std::int32_t days_since_epoch() const { return days_; }

    constexpr Date plus_days(std::int32_t n) const { return Date(days_ + n); }
    constexpr Date minus_days(std::int32_t n) const { return Date(days_ - n); }

    /// Whole days from other to *this.
    constexpr std::int32_t operator-(Date other) const { return days_ - other.days_; }

    auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

}  // namespace epss
