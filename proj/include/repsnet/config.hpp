#pragma once

// Flat key=value text with '#' comments.

#include <string>
#include <utility>
#include <vector>

namespace repsnet {

/// Keys in file order. Duplicate keys are rejected by the parser.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text);

int parse_int(const std::string& value, const std::string& key);
double parse_double(const std::string& value, const std::string& key);
bool parse_bool(const std::string& value, const std::string& key);
/// Comma separated, e.g. "2,2,3,2".
std::vector<int> parse_int_list(const std::string& value);

std::string read_text_file(const std::string& path);

}  // namespace repsnet
