#pragma once

// One tidy CSV row per (trial, metric).

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <string>
#include <string_view>
#include <vector>

#include "qht/harness/experiment.hpp"

namespace qht::harness {

enum class Metric { Linf, Op, L2, L1, FroOverD, NucOverD };

inline std::string_view metric_name(Metric m) {
    switch (m) {
    case Metric::Linf: return "linf";
    case Metric::Op: return "op";
    case Metric::L2: return "l2";
    case Metric::L1: return "l1";
    case Metric::FroOverD: return "fro_over_d";
    case Metric::NucOverD: return "nuc_over_d";
    }
    return "?";
}

inline Metric parse_metric(std::string_view s) {
    for (Metric m : {Metric::Linf, Metric::Op, Metric::L2, Metric::L1, Metric::FroOverD, Metric::NucOverD})
        if (metric_name(m) == s)
            return m;
    throw ConfigError("metric: unknown metric '" + std::string(s) + "'");
}

struct ResultRow {
    std::string family; // family name, ":variant" suffix for ablation arms
    long n = 0;
    long d = 0;
    long s_or_r = 0;
    double delta = 0.0;
    int trial = 0;
    Metric metric = Metric::L2;
    double value = 0.0;
    bool converged = true;
    double wallclock = 0.0;
};

inline constexpr std::string_view kCsvHeader = "family,n,d,s_or_r,delta,trial,metric,value,converged,wallclock_s";

namespace detail {

inline std::string fmt_double(double v, const char* f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

template <class T>
T parse_num(const std::string& s, const char* column, std::size_t lineNo) {
    T v{};
    if constexpr (std::is_floating_point_v<T>) {
        try {
            std::size_t used = 0;
            v = std::stod(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
        } catch (const std::exception&) {
            throw ConfigError(std::string("csv line ") + std::to_string(lineNo) + ": bad " + column + " '" + s + "'");
        }
    } else {
        auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc() || p != s.data() + s.size())
            throw ConfigError(std::string("csv line ") + std::to_string(lineNo) + ": bad " + column + " '" + s + "'");
    }
    return v;
}

} // namespace detail

inline void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
    out << kCsvHeader << '\n';
    for (const auto& r : rows) {
        out << r.family << ',' << r.n << ',' << r.d << ',' << r.s_or_r << ',' << detail::fmt_double(r.delta, "%.17g")
            << ',' << r.trial << ',' << metric_name(r.metric) << ',' << detail::fmt_double(r.value, "%.17g") << ','
            << (r.converged ? 1 : 0) << ',' << detail::fmt_double(r.wallclock, "%.6f") << '\n';
    }
}

inline std::vector<ResultRow> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line))
        throw ConfigError("csv: empty input");
    if (!line.empty() && line.back() == '\r')
        line.pop_back();
    if (line != kCsvHeader)
        throw ConfigError("csv: header must be exactly '" + std::string(kCsvHeader) + "'");
    std::vector<ResultRow> rows;
    std::size_t lineNo = 1;
    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line == "\r")
            continue;
        const auto f = detail::split_csv_line(line);
        if (f.size() != 10)
            throw ConfigError("csv line " + std::to_string(lineNo) + ": expected 10 columns, got " +
                              std::to_string(f.size()));
        ResultRow r;
        r.family = f[0];
        r.n = detail::parse_num<long>(f[1], "n", lineNo);
        r.d = detail::parse_num<long>(f[2], "d", lineNo);
        r.s_or_r = detail::parse_num<long>(f[3], "s_or_r", lineNo);
        r.delta = detail::parse_num<double>(f[4], "delta", lineNo);
        r.trial = detail::parse_num<int>(f[5], "trial", lineNo);
        r.metric = parse_metric(f[6]);
        r.value = detail::parse_num<double>(f[7], "value", lineNo);
        const int conv = detail::parse_num<int>(f[8], "converged", lineNo);
        if (conv != 0 && conv != 1)
            throw ConfigError("csv line " + std::to_string(lineNo) + ": converged must be 0 or 1");
        r.converged = conv == 1;
        r.wallclock = detail::parse_num<double>(f[9], "wallclock_s", lineNo);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<ResultRow> read_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("csv: cannot open '" + path + "'");
    return read_csv(in);
}

} // namespace qht::harness
