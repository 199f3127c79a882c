#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lulc/error.hpp"

namespace lulc {

/// Splits on a delimiter, keeping empty fields.
inline std::vector<std::string_view> split(std::string_view s, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == delim) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

/// Shortest representation that round-trips exactly. All persisted
/// floating-point text goes through these so files are byte-reproducible.
inline std::string fmt(float v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::int64_t parse_int(std::string_view s, std::string_view what) {
    std::int64_t v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("bad integer for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline double parse_double(std::string_view s, std::string_view what) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("bad number for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

inline float parse_float(std::string_view s, std::string_view what) {
    float v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw FormatError("bad number for " + std::string(what) + ": '" + std::string(s) + "'");
    return v;
}

}  // namespace lulc
