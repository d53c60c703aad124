#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kbmap {

// Input/format problems (exit code 1 at the CLI); std::logic_error is
// reserved for broken internal invariants (exit code 2).
struct io_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
    parse_error(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_no(line) {}
    std::size_t line_no;
};

inline std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string_view strip_cr(std::string_view s) {
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline bool has_whitespace(std::string_view s) {
    for (char c : s)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return true;
    return false;
}

// Shortest representation that round-trips the exact double.
inline std::string format_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

inline std::string format_fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw parse_error("bad numeric field '" + std::string(s) + "'", line_no);
    return v;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("no such file: " + path);
    return in;
}

// Writes via a temp file and renames into place so failures never leave a
// partial output behind.
template <typename WriteFn>
void atomic_write(const std::string& path, WriteFn&& fn) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp);
        fn(out);
        out.flush();
        if (!out) throw io_error("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw io_error("rename failed: " + tmp + " -> " + path);
}

}  // namespace kbmap
