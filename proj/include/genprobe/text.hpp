#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace genprobe {

std::vector<std::string_view> split(std::string_view s, char sep);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::string_view trim(std::string_view s);
std::string_view trim_right(std::string_view s);

// Unicode lowercase; ASCII input takes a fast path that never touches ICU.
std::string fold_case(std::string_view s);

bool iequals(std::string_view a, std::string_view b);

std::string format_double(double v, int precision);

}  // namespace genprobe
