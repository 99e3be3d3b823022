#pragma once

#include <string>
#include <variant>

#include "json.hpp"

namespace xp {

using json = nlohmann::json;

/// A scalar parameter or variability value: a decimal number or a string
/// (command, dataset reference, deployment label).
using Value = std::variant<double, std::string>;

inline bool is_number(const Value& v) { return std::holds_alternative<double>(v); }

/// Shortest decimal text that parses back to exactly the same double.
std::string format_number(double x);

/// Human/CLI rendering: numbers via format_number, strings verbatim.
std::string to_display(const Value& v);

json to_json(const Value& v);
Value value_from_json(const json& j);

}  // namespace xp
