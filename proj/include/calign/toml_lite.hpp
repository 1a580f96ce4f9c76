#pragma once
// Minimal TOML reader covering the subset the config file uses: [section]
// and [dotted.section] headers, `key = value` pairs with string / integer /
// float / boolean values, comments, and blank lines. Returns the document
// as a nested JSON object.

#include <string>

#include "calign/core.hpp"

namespace calign {

json parse_toml(const std::string& text);
json parse_toml_file(const std::string& path);

}  // namespace calign
