#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace mcgae {

/// Shortest decimal string that parses back to exactly `v` ("nan", "inf", "-inf" for
/// non-finite values).
std::string format_double(double v);

/// Inverse of format_double. Throws FormatError on malformed input.
double parse_double(std::string_view text);

std::vector<std::string> split(const std::string& text, char sep);

std::string read_token(std::istream& is);

}  // namespace mcgae
