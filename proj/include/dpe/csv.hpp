#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dpe/common.hpp"
#include "dpe/series.hpp"

namespace dpe {

/// Column selection for CSV ingestion. The timestamp column plus N numeric
/// feature columns, all referenced by header name.
struct CsvSchema {
    std::string timestamp_column;
    std::vector<std::string> feature_columns;
    bool drop_missing = true;   // false: any missing cell is a hard error
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline bool is_missing_cell(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

inline std::optional<double> parse_double(const std::string& s) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return v;
}

inline std::optional<long long> parse_integer(const std::string& s) {
    const char* begin = s.data();
    const char* end = begin + s.size();
    long long v = 0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end) {
        return std::nullopt;
    }
    return v;
}

// ISO-8601 labels order lexicographically; epoch integers order numerically.
inline bool timestamps_increasing(const std::vector<std::string>& ts) {
    bool all_numeric = true;
    std::vector<long long> nums;
    nums.reserve(ts.size());
    for (const auto& s : ts) {
        auto v = parse_integer(s);
        if (!v) {
            all_numeric = false;
            break;
        }
        nums.push_back(*v);
    }
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const bool ok = all_numeric ? nums[i - 1] < nums[i] : ts[i - 1] < ts[i];
        if (!ok) return false;
    }
    return true;
}

} // namespace detail

/// Reads a headered, comma-delimited CSV into a RawSeries. Rows with missing
/// selected cells are dropped (one warning per row) unless
/// `schema.drop_missing` is false, in which case they are a hard error.
/// Non-numeric values in selected columns and non-increasing timestamps are
/// always errors.
inline RawSeries load_csv(const std::string& path, const CsvSchema& schema,
                          std::vector<std::string>* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_csv: cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("load_csv: '" + path + "' is empty");
    }
    const auto header = detail::split_csv_line(line);
    auto find_col = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw DataError("load_csv: column '" + name + "' not found in '" + path + "'");
    };
    const std::size_t ts_col = find_col(schema.timestamp_column);
    std::vector<std::size_t> feat_cols;
    feat_cols.reserve(schema.feature_columns.size());
    for (const auto& name : schema.feature_columns) {
        feat_cols.push_back(find_col(name));
    }

    std::vector<std::string> timestamps;
    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            throw DataError("load_csv: line " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(header.size()));
        }
        bool missing = false;
        std::vector<double> row(feat_cols.size());
        for (std::size_t i = 0; i < feat_cols.size(); ++i) {
            const std::string& cell = fields[feat_cols[i]];
            if (detail::is_missing_cell(cell)) {
                missing = true;
                break;
            }
            auto v = detail::parse_double(cell);
            if (!v) {
                throw DataError("load_csv: line " + std::to_string(line_no) +
                                ": cannot parse '" + cell + "' in column '" +
                                schema.feature_columns[i] + "'");
            }
            row[i] = *v;
        }
        if (missing) {
            if (!schema.drop_missing) {
                throw DataError("load_csv: line " + std::to_string(line_no) + " has missing cells");
            }
            if (warnings) {
                warnings->push_back("dropped line " + std::to_string(line_no) + " (missing cells)");
            }
            continue;
        }
        timestamps.push_back(fields[ts_col]);
        rows.push_back(std::move(row));
    }
    if (rows.size() < 2) {
        throw DataError("load_csv: '" + path + "' has fewer than 2 usable rows");
    }
    if (!detail::timestamps_increasing(timestamps)) {
        throw DataError("load_csv: timestamps in '" + path + "' are not strictly increasing");
    }

    RawSeries series;
    series.values.resize(static_cast<Eigen::Index>(rows.size()),
                         static_cast<Eigen::Index>(feat_cols.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < feat_cols.size(); ++c) {
            series.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        }
    }
    series.timestamps = std::move(timestamps);
    series.column_names = schema.feature_columns;
    return series;
}

// ---------------------------------------------------------------------------
// Small CSV-writing helpers shared by the report exporters. Numeric cells use
// %.17g so reloading reproduces the value bit-for-bit.
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string csv_quote_if_needed(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    if (const auto parent = std::filesystem::path(path).parent_path(); !parent.empty()) {
        std::filesystem::create_directories(parent);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot open '" + path + "' for writing");
    }
    out << content;
    if (!out) {
        throw DataError("write to '" + path + "' failed");
    }
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Parses a CSV written by this library back into header + string cells.
inline std::pair<std::vector<std::string>, std::vector<std::vector<std::string>>>
read_csv_table(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open '" + path + "'");
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("'" + path + "' is empty");
    }
    auto header = detail::split_csv_line(line);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        rows.push_back(detail::split_csv_line(line));
    }
    return {std::move(header), std::move(rows)};
}

} // namespace dpe
