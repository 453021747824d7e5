// Copyright 2026 The qclkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file calibration.hpp
 * Per-qubit and per-pair error tables read from a sectioned CSV file.
 *
 *     [x_errors]        qubit,error
 *     [cnot_errors]     control,target,error
 *     [readout_errors]  qubit,error
 *     [medians]         name,value          (optional)
 *
 * Lines starting with '#' are comments. The first row of a section may be a
 * column header. Declared medians (x_error, cnot_error, readout_error) are
 * checked against the tables; t1_us and t2_us are stored as given.
 */
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "error.hpp"

namespace qcl {

using QubitPair = std::pair<int, int>;

struct CalibrationData {
    std::map<int, double> x_errors;
    std::map<QubitPair, double> cnot_errors;
    std::map<int, double> readout_errors;
    std::optional<double> t1_us;
    std::optional<double> t2_us;

    /// CNOT error for an undirected coupling, if the pair exists in either order.
    [[nodiscard]] std::optional<double> cnot_error(int a, int b) const {
        if (auto it = cnot_errors.find({a, b}); it != cnot_errors.end()) {
            return it->second;
        }
        if (auto it = cnot_errors.find({b, a}); it != cnot_errors.end()) {
            return it->second;
        }
        return std::nullopt;
    }

    /// Shortest path (in couplings) between two physical qubits; empty if unreachable.
    [[nodiscard]] std::vector<int> coupling_path(int from, int to) const {
        std::map<int, std::vector<int>> adj;
        for (const auto &[pair, err] : cnot_errors) {
            adj[pair.first].push_back(pair.second);
            adj[pair.second].push_back(pair.first);
        }
        std::map<int, int> parent{{from, from}};
        std::queue<int> frontier;
        frontier.push(from);
        while (!frontier.empty()) {
            const int q = frontier.front();
            frontier.pop();
            if (q == to) {
                break;
            }
            for (int n : adj[q]) {
                if (parent.emplace(n, q).second) {
                    frontier.push(n);
                }
            }
        }
        if (!parent.contains(to)) {
            return {};
        }
        std::vector<int> path{to};
        while (path.back() != from) {
            path.push_back(parent[path.back()]);
        }
        std::reverse(path.begin(), path.end());
        return path;
    }
};

namespace detail {

template <class Map> std::vector<double> values_of(const Map &m) {
    std::vector<double> v;
    v.reserve(m.size());
    for (const auto &[k, e] : m) {
        v.push_back(e);
    }
    return v;
}

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

inline std::optional<double> to_double(std::string_view s) {
    // std::from_chars for double is not available on every toolchain we target.
    if (s.empty()) {
        return std::nullopt;
    }
    std::string buf(s);
    char *end = nullptr;
    const double v = std::strtod(buf.c_str(), &end);
    if (end != buf.c_str() + buf.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline std::optional<int> to_int(std::string_view s) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

} // namespace detail

/// Median; the mean of the two middle values for even counts.
inline double median(std::vector<double> v) {
    if (v.empty()) {
        throw ValidationError("median of an empty table");
    }
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

inline double median_x_error(const CalibrationData &c) { return median(detail::values_of(c.x_errors)); }
inline double median_cnot_error(const CalibrationData &c) {
    return median(detail::values_of(c.cnot_errors));
}
inline double median_readout_error(const CalibrationData &c) {
    return median(detail::values_of(c.readout_errors));
}

inline CalibrationData parse_calibration(std::string_view text) {
    enum class Section { None, X, Cnot, Readout, Medians };
    CalibrationData data;
    std::map<std::string, double> declared;
    Section section = Section::None;
    bool header_allowed = false;
    bool any_section = false;
    std::size_t line_no = 0;

    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto line = detail::trim(raw);
        if (line.empty() || line.front() == '#') {
            continue;
        }
        if (line.front() == '[') {
            if (line == "[x_errors]") {
                section = Section::X;
            } else if (line == "[cnot_errors]") {
                section = Section::Cnot;
            } else if (line == "[readout_errors]") {
                section = Section::Readout;
            } else if (line == "[medians]") {
                section = Section::Medians;
            } else {
                throw ParseError("unknown section " + std::string(line), line_no);
            }
            header_allowed = true;
            any_section = true;
            continue;
        }
        if (section == Section::None) {
            throw ParseError("data row outside of any section", line_no);
        }
        const auto fields = detail::split_csv(line);
        const std::size_t want = section == Section::Cnot ? 3 : 2;
        if (fields.size() != want) {
            throw ParseError("expected " + std::to_string(want) + " comma-separated fields",
                             line_no);
        }
        const bool numeric_row = section == Section::Medians
                                     ? detail::to_double(fields[1]).has_value()
                                     : detail::to_int(fields[0]).has_value();
        if (!numeric_row && header_allowed) {
            header_allowed = false;
            continue;
        }
        header_allowed = false;

        const auto value = detail::to_double(fields.back());
        if (!value) {
            throw ParseError("malformed number '" + std::string(fields.back()) + "'", line_no);
        }
        if (section == Section::Medians) {
            declared[std::string(fields[0])] = *value;
            continue;
        }
        if (*value < 0.0 || *value > 1.0) {
            throw ValidationError("line " + std::to_string(line_no) + ": probability " +
                                  std::string(fields.back()) + " outside [0, 1]");
        }
        const auto q0 = detail::to_int(fields[0]);
        if (!q0 || *q0 < 0) {
            throw ParseError("malformed qubit index '" + std::string(fields[0]) + "'", line_no);
        }
        switch (section) {
        case Section::X:
            data.x_errors[*q0] = *value;
            break;
        case Section::Readout:
            data.readout_errors[*q0] = *value;
            break;
        case Section::Cnot: {
            const auto q1 = detail::to_int(fields[1]);
            if (!q1 || *q1 < 0 || *q1 == *q0) {
                throw ParseError("malformed qubit pair", line_no);
            }
            data.cnot_errors[{*q0, *q1}] = *value;
            break;
        }
        default:
            break;
        }
    }
    if (!any_section) {
        throw ParseError("calibration file has no sections");
    }
    if (data.x_errors.empty() || data.cnot_errors.empty() || data.readout_errors.empty()) {
        throw ParseError("calibration file must contain x_errors, cnot_errors and "
                         "readout_errors tables");
    }
    for (const auto &[pair, err] : data.cnot_errors) {
        if (!data.x_errors.contains(pair.first) || !data.x_errors.contains(pair.second)) {
            throw ValidationError("CNOT pair (" + std::to_string(pair.first) + ", " +
                                  std::to_string(pair.second) +
                                  ") references a qubit missing from x_errors");
        }
    }

    const auto check = [&](const char *name, double computed) {
        if (auto it = declared.find(name); it != declared.end()) {
            if (std::abs(it->second - computed) > 1e-12 * std::max(1.0, std::abs(computed))) {
                throw ValidationError(std::string("declared median ") + name +
                                      " does not match table median");
            }
        }
    };
    check("x_error", median_x_error(data));
    check("cnot_error", median_cnot_error(data));
    check("readout_error", median_readout_error(data));
    if (auto it = declared.find("t1_us"); it != declared.end()) {
        data.t1_us = it->second;
    }
    if (auto it = declared.find("t2_us"); it != declared.end()) {
        data.t2_us = it->second;
    }
    return data;
}

inline CalibrationData load_calibration(const std::string &path) {
    std::ifstream f(path);
    if (!f) {
        throw ParseError("cannot open calibration file '" + path + "'");
    }
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_calibration(buf.str());
}

} // namespace qcl
