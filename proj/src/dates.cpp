#include "dfl/dates.hpp"

#include <array>
#include <cctype>
#include <cstdio>

namespace dfl {

namespace {

bool is_leap(int y) {
    return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

int days_in_month(int y, int m) {
    static constexpr std::array<int, 13> days = {0, 31, 28, 31, 30, 31, 30,
                                                 31, 31, 30, 31, 30, 31};
    if (m == 2 && is_leap(y)) return 29;
    return days[m];
}

bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

}  // namespace

bool is_valid_date(Date d) {
    const int y = d / 10000;
    const int m = (d / 100) % 100;
    const int day = d % 100;
    if (y < 1 || m < 1 || m > 12 || day < 1) return false;
    return day <= days_in_month(y, m);
}

Date parse_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return 0;
    const std::string y = s.substr(0, 4), m = s.substr(5, 2), d = s.substr(8, 2);
    if (!all_digits(y) || !all_digits(m) || !all_digits(d)) return 0;
    const Date date = std::stoi(y) * 10000 + std::stoi(m) * 100 + std::stoi(d);
    return is_valid_date(date) ? date : 0;
}

Date parse_compact_date(const std::string& s) {
    if (s.size() != 8 || !all_digits(s)) return 0;
    const Date date = std::stoi(s);
    return is_valid_date(date) ? date : 0;
}

std::string format_iso_date(Date d) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d / 10000, (d / 100) % 100, d % 100);
    return buf;
}

Date next_date(Date d) {
    int y = d / 10000, m = (d / 100) % 100, day = d % 100;
    ++day;
    if (day > days_in_month(y, m)) {
        day = 1;
        ++m;
        if (m > 12) {
            m = 1;
            ++y;
        }
    }
    return y * 10000 + m * 100 + day;
}

}  // namespace dfl
