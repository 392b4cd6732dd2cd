#pragma once

#include <charconv>
#include <cstdint>
#include <string>

namespace pnacc {

// Locale-independent shortest-round-trip double formatting.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

inline std::string format_double(double v, int precision) {
    char buf[64];
    auto [end, ec] =
        std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, precision);
    return std::string(buf, end);
}

}  // namespace pnacc
