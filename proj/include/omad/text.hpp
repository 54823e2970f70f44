#pragma once

#include <string>
#include <string_view>

namespace omad {

// Shortest decimal that reads back to the same double; "inf", "-inf", "nan"
// for non-finite values.
std::string shortest_double(double v);

// Whole-string parses; return false on any trailing characters.
bool parse_double(std::string_view text, double& out);
bool parse_int64(std::string_view text, long long& out);

}  // namespace omad
