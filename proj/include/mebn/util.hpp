#pragma once

// Small shared helpers: string handling, deterministic number formatting,
// and line-oriented file IO.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mebn/error.hpp"

namespace mebn {

inline std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

// Case-insensitive lexicographic "less than" with a byte-wise tiebreak, so the
// order is still total over strings differing only in case.
inline bool ci_less(const std::string& a, const std::string& b) {
    const std::string la = lower(a), lb = lower(b);
    if (la != lb) return la < lb;
    return a < b;
}

inline bool ci_equal(const std::string& a, const std::string& b) { return lower(a) == lower(b); }

// Canonical numeric formatting for emitted scripts and reports: up to nine
// significant digits, trailing zeros trimmed, no locale dependence.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    if (v == 0.0) return "0"; // avoid "-0"
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

inline double parse_number(const std::string& s, const std::string& what) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) fail(Errc::BadNumber, what + ": trailing characters in '" + s + "'");
        return v;
    } catch (const Error&) {
        throw;
    } catch (const std::exception&) {
        fail(Errc::BadNumber, what + ": cannot parse '" + s + "' as a number");
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::Io, "cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(Errc::Io, "cannot open '" + path + "' for writing");
    out << content;
    if (!out) fail(Errc::Io, "short write to '" + path + "'");
}

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace mebn
