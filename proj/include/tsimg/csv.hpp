#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "tsimg/series.hpp"

namespace tsimg {

// Dataset CSV: header `series_id,t,f0,...,f{K-1}`, rows sorted by (series_id, t),
// t a 0-based integer timestep.

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, size_t row, size_t col) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("csv: non-numeric cell '" + s + "' at row " + std::to_string(row) +
                         ", column " + std::to_string(col));
    return v;
}

inline long parse_long(const std::string& s, size_t row, size_t col) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ParseError("csv: non-integer cell '" + s + "' at row " + std::to_string(row) +
                         ", column " + std::to_string(col));
    return v;
}

}  // namespace detail

inline SeriesBatch load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("csv: cannot open " + path);

    std::string line;
    if (!std::getline(in, line)) throw ParseError("csv: empty file " + path);
    auto header = detail::split_csv_line(line);
    if (header.size() < 3 || header[0] != "series_id" || header[1] != "t")
        throw ParseError("csv: expected header series_id,t,f0,... in " + path);
    const int K = int(header.size()) - 2;
    for (int k = 0; k < K; ++k)
        if (header[2 + k] != "f" + std::to_string(k))
            throw ParseError("csv: expected feature column f" + std::to_string(k) +
                             ", got " + header[2 + k]);

    // series appear contiguously; collect rows per id in file order
    std::vector<std::pair<std::string, std::vector<std::vector<double>>>> groups;
    size_t row = 1, rows_read = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw ParseError("csv: row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        const std::string& id = cells[0];
        long t = detail::parse_long(cells[1], row, 2);
        if (groups.empty() || groups.back().first != id) {
            for (const auto& g : groups)
                if (g.first == id)
                    throw ParseError("csv: series " + id + " is not contiguous (row " +
                                     std::to_string(row) + ")");
            groups.emplace_back(id, std::vector<std::vector<double>>{});
        }
        auto& rows = groups.back().second;
        if (t != long(rows.size()))
            throw ParseError("csv: series " + id + " expected t=" + std::to_string(rows.size()) +
                             " at row " + std::to_string(row) + ", got " + std::to_string(t));
        std::vector<double> vals(K);
        for (int k = 0; k < K; ++k) vals[k] = detail::parse_double(cells[2 + k], row, 3 + k);
        rows.push_back(std::move(vals));
        ++rows_read;
    }
    if (groups.empty()) throw ParseError("csv: no data rows in " + path);

    SeriesBatch batch;
    size_t L0 = groups.front().second.size();
    for (auto& [id, rows] : groups) {
        if (rows.size() != L0)
            throw ValidationError("csv: series " + id + " has length " + std::to_string(rows.size()) +
                                  ", expected " + std::to_string(L0));
        TimeSeries ts(int(L0), K);
        for (size_t t = 0; t < rows.size(); ++t)
            for (int k = 0; k < K; ++k) ts.at(int(t), k) = rows[t][k];
        ts.validate();
        batch.push(std::move(ts));
    }
    // never silently drop rows
    check(rows_read == batch.size() * L0, "csv: internal row accounting mismatch");
    return batch;
}

inline void write_csv(const SeriesBatch& batch, const std::string& path, int K_hint = 0) {
    std::ofstream out(path);
    if (!out) throw ValidationError("csv: cannot write " + path);
    const int K = batch.empty() ? K_hint : batch.features();
    out << "series_id,t";
    for (int k = 0; k < K; ++k) out << ",f" << k;
    out << "\n";
    out.precision(17);
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& ts = batch.items[i];
        for (int t = 0; t < ts.length; ++t) {
            out << i << "," << t;
            for (int k = 0; k < K; ++k) out << "," << ts.at(t, k);
            out << "\n";
        }
    }
    if (!out) throw RuntimeFailure("csv: write failed for " + path);
}

}  // namespace tsimg
