#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "stratkit/core.hpp"

namespace stratkit::csv {

/// Comma-separated, header row required, no quoting. Blank lines are skipped
/// and a trailing '\r' is stripped.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t size() const { return rows.size(); }
    bool has(std::string_view name) const;
    /// Throws MissingColumn.
    std::size_t column(std::string_view name) const;
    /// Parses a column as doubles; a bad cell raises `kind` naming row and column.
    std::vector<double> numeric(std::string_view name, ErrorKind kind = ErrorKind::SchemaError) const;
};

Table read(std::istream& in);
Table read_file(const std::string& path);

/// Shortest round-trip decimal form.
std::string format_number(double value);

void write_row(std::ostream& out, const std::vector<std::string>& cells);

}  // namespace stratkit::csv
