#include "stratkit/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace stratkit::csv {
namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

std::string trim(std::string s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t");
    return s.substr(first, last - first + 1);
}

}  // namespace

bool Table::has(std::string_view name) const {
    for (const auto& h : header) {
        if (h == name) return true;
    }
    return false;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (header[j] == name) return j;
    }
    throw Error(ErrorKind::MissingColumn, "column '" + std::string(name) + "' not found");
}

std::vector<double> Table::numeric(std::string_view name, ErrorKind kind) const {
    const std::size_t j = column(name);
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const std::string& cell = rows[i][j];
        double v = 0.0;
        const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (cell.empty() || res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || !std::isfinite(v)) {
            throw Error(kind, "row " + std::to_string(i + 1) + ", column '" + std::string(name) + "': '" + cell +
                                  "' is not a finite number");
        }
        out[i] = v;
    }
    return out;
}

Table read(std::istream& in) {
    Table t;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto cells = split(line);
        for (auto& c : cells) c = trim(c);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size()) {
            throw Error(ErrorKind::SchemaError, "line " + std::to_string(line_no) + " has " +
                                                    std::to_string(cells.size()) + " fields, header has " +
                                                    std::to_string(t.header.size()));
        }
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw Error(ErrorKind::EmptyInput, "CSV input has no header row");
    return t;
}

Table read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::InvalidArgument, "cannot open '" + path + "'");
    return read(in);
}

std::string format_number(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void write_row(std::ostream& out, const std::vector<std::string>& cells) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
        if (j > 0) out << ',';
        out << cells[j];
    }
    out << '\n';
}

}  // namespace stratkit::csv
