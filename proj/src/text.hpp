#pragma once

// Small text helpers shared by the CSV/JSONL readers and writers.

#include <charconv>
#include <string>
#include <string_view>
#include <vector>

#include "vibes/errors.hpp"

namespace vibes::text {

/// Shortest round-trip representation.
inline std::string num(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        out.push_back(line.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view s, std::size_t line) {
    s = trim(s);
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw ParseError("cannot parse number '" + std::string(s) + "'", line);
    return v;
}

}  // namespace vibes::text
