#pragma once

#include <string_view>

namespace t2lc {

inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace t2lc
