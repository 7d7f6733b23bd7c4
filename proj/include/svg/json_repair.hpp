#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "svg/core.hpp"

namespace svg::jsonrepair {

// Rewrites python-literal quirks into JSON: single-quoted strings,
// True/False/None, and trailing commas before a closing bracket.
std::string repair(std::string_view text);

// Tries each '{' in order, takes the balanced span starting there, and returns
// the first one that parses as an object (directly or after repair()).
// Notes about repairs are appended to `diagnostics`.
std::optional<nlohmann::json> find_object(std::string_view text,
                                          std::vector<Diagnostic>& diagnostics);

}  // namespace svg::jsonrepair
