#pragma once

// Small text helpers shared by the CSV readers/writers. Numbers are printed
// with std::to_chars (shortest round-trip form) so output files are
// byte-stable and re-parse to the exact same doubles.

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "policysim/errors.hpp"

namespace policysim {

inline std::string num_to_string(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    (void)ec;
    return std::string(buf, ptr);
}

inline std::string num_to_string(int x) { return std::to_string(x); }

inline double parse_double(std::string_view s, const std::string& context) {
    if (s == "nan") return std::nan("");
    double out = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc{} || ptr != last) {
        throw PanelError("unparseable number '" + std::string(s) + "' in " + context);
    }
    return out;
}

inline int parse_int(std::string_view s, const std::string& context) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw PanelError("unparseable integer '" + std::string(s) + "' in " + context);
    }
    return out;
}

// Splits one CSV line on commas. Quoting is not supported; the file formats
// used here never emit quoted fields.
inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    for (auto& f : out) {
        while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
        std::size_t i = 0;
        while (i < f.size() && f[i] == ' ') ++i;
        f.erase(0, i);
    }
    return out;
}

}  // namespace policysim
