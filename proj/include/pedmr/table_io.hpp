#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace pedmr::io {

// One parsed row of a delimited text file. Fields keep empty entries when the
// row is comma-delimited so that "a,,b" has three fields.
using Row = std::vector<std::string>;

// Splits on commas if the line contains one, otherwise on runs of whitespace.
Row split_fields(std::string_view line);

// Reads all non-blank, non-comment ('#') rows.
std::vector<Row> read_rows(std::istream& in);

std::string trim(std::string_view s);

// Shortest round-trippable decimal rendering; stable across runs.
std::string format_double(double v);

// Fixed 17-significant-digit rendering used by data products.
std::string format_g17(double v);

}  // namespace pedmr::io
