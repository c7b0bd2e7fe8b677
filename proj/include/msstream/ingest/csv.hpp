#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include "msstream/classify.hpp"
#include "msstream/error.hpp"
#include "msstream/panel.hpp"

namespace msstream::ingest {

/// Shortest-safe text form used in every file and wire format: 17 significant digits.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    for (;;) {
        const auto pos = line.find(',', start);
        cells.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return cells;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_number(std::string_view cell, std::size_t line, std::size_t col) {
    cell = trim(cell);
    if (cell.empty()) throw ParseError("blank cell in column " + std::to_string(col + 1) + " (no imputation)", line);
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw ParseError("non-numeric cell '" + std::string(cell) + "' in column " + std::to_string(col + 1), line);
    }
    return v;
}

}  // namespace detail

/// Reads a wide CSV: header `ts,<id>,<id>,...`, then one row per time point.
inline RawPanel parse_wide_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> ids;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (!detail::trim(line).empty()) break;
    }
    if (detail::trim(line).empty()) throw ParseError("empty input: missing header row");
    const auto header = detail::split_commas(line);
    if (header.size() < 2) throw ParseError("header needs a timestamp column and at least one series id", line_no);
    std::unordered_set<std::string> seen;
    for (std::size_t c = 1; c < header.size(); ++c) {
        std::string id(detail::trim(header[c]));
        if (id.empty()) throw ParseError("empty series id in column " + std::to_string(c + 1), line_no);
        if (!seen.insert(id).second) throw ParseError("duplicate series id '" + id + "'", line_no);
        ids.push_back(std::move(id));
    }

    std::vector<std::vector<double>> rows(ids.size());
    std::vector<double> ts;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(line);
        if (cells.size() != header.size()) {
            throw ParseError("ragged row: " + std::to_string(cells.size()) + " cells, expected " +
                                 std::to_string(header.size()),
                             line_no);
        }
        const double stamp = detail::parse_number(cells[0], line_no, 0);
        if (!ts.empty() && !(stamp > ts.back())) throw ParseError("timestamps must be strictly increasing", line_no);
        ts.push_back(stamp);
        for (std::size_t c = 1; c < cells.size(); ++c) rows[c - 1].push_back(detail::parse_number(cells[c], line_no, c));
    }
    if (ts.empty()) throw ParseError("no data rows", line_no);
    return RawPanel::from_rows(std::move(ids), rows, std::move(ts));
}

inline RawPanel parse_wide_csv_text(const std::string& text) {
    std::istringstream in(text);
    return parse_wide_csv(in);
}

inline RawPanel parse_wide_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return parse_wide_csv(in);
}

inline void write_wide_csv(std::ostream& out, const RawPanel& panel) {
    out << "ts";
    for (const auto& id : panel.ids()) out << ',' << id;
    out << '\n';
    for (std::size_t t = 0; t < panel.n_times(); ++t) {
        out << format_double(panel.timestamps()[t]);
        for (double v : panel.column(t)) out << ',' << format_double(v);
        out << '\n';
    }
}

/// MS-plot table: `id,mo,vo,label,approximate`.
inline void write_msplot_csv(std::ostream& out, const std::vector<MsPoint>& points) {
    out << "id,mo,vo,label,approximate\n";
    for (const auto& p : points) {
        out << p.series_id << ',' << format_double(p.mo) << ',' << format_double(p.vo) << ',' << to_string(p.label)
            << ',' << (p.approximate ? "true" : "false") << '\n';
    }
}

inline constexpr const char* kMsplotHeader = "id,mo,vo,label,approximate";

/// Reads the table written by write_msplot_csv.
inline std::vector<MsPoint> parse_msplot_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<MsPoint> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no == 1) {
            if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            if (line != kMsplotHeader) throw ParseError(std::string("expected header '") + kMsplotHeader + "'", 1);
            continue;
        }
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_commas(line);
        if (cells.size() != 5) throw ParseError("expected 5 cells, got " + std::to_string(cells.size()), line_no);
        MsPoint p;
        p.series_id = std::string(detail::trim(cells[0]));
        p.mo = detail::parse_number(cells[1], line_no, 1);
        p.vo = detail::parse_number(cells[2], line_no, 2);
        const auto label = detail::trim(cells[3]);
        if (label == "central") {
            p.label = Label::central;
        } else if (label == "outlying") {
            p.label = Label::outlying;
        } else {
            throw ParseError("label must be central or outlying", line_no);
        }
        const auto approx = detail::trim(cells[4]);
        if (approx != "true" && approx != "false") throw ParseError("approximate must be true or false", line_no);
        p.approximate = approx == "true";
        out.push_back(std::move(p));
    }
    if (line_no == 0) throw ParseError("empty input: missing header row");
    return out;
}

}  // namespace msstream::ingest
