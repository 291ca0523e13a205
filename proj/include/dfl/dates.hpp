#pragma once

#include <cstdint>
#include <string>

namespace dfl {

/// Calendar dates are carried as packed yyyymmdd integers (e.g. 20190102).
/// Comparison as plain integers matches chronological order.
using Date = std::int32_t;

bool is_valid_date(Date d);

/// Parses "YYYY-MM-DD". Returns 0 on failure.
Date parse_iso_date(const std::string& s);

/// Parses "YYYYMMDD". Returns 0 on failure.
Date parse_compact_date(const std::string& s);

std::string format_iso_date(Date d);

/// The following calendar day (handles month/year boundaries and leap years).
Date next_date(Date d);

}  // namespace dfl
