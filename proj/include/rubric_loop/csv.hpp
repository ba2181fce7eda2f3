#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rubric_loop::csv {

// RFC 4180 quoting: fields containing a comma, quote, CR or LF are quoted
// and embedded quotes doubled.
std::string escape(std::string_view field);
std::string row(const std::vector<std::string>& fields);

// Parses a whole document. Quoted fields may span lines.
std::vector<std::vector<std::string>> parse(std::string_view text);

}  // namespace rubric_loop::csv
