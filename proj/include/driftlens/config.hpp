#pragma once

#include <string>

#include "json.hpp"

namespace driftlens {

// Minimal key-value config format used for plans and grids:
//
//   # comment
//   key = value
//   [section]          keys below land in a nested object
//   [section.sub]
//
// Values: "strings" (escapes \" \\ \n \t), integers, reals, true/false, and
// single-line arrays of those ([1, 2], ["a", "b"], nested arrays allowed).
// Throws Parse with the line number on malformed input or duplicate keys.
nlohmann::json parse_config(const std::string& text);
nlohmann::json load_config(const std::string& path);

}  // namespace driftlens
