#pragma once

// Minimal CSV I/O: UTF-8, header row, empty cell = missing value, '.' decimal
// separator. Doubles are written in shortest round-trip form so identical
// data always serializes to identical bytes.

#include <optional>
#include <string>
#include <vector>

namespace dxtab::csv {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::optional<std::size_t> column(const std::string& name) const;
};

Table read_file(const std::string& path);
Table parse(const std::string& text);

void write_file(const std::string& path, const Table& table);
std::string to_string(const Table& table);

// Strict numeric parse; throws with row/column context on failure.
double parse_number(const std::string& cell, std::size_t row, const std::string& column);

std::string format_double(double v);

}  // namespace dxtab::csv
