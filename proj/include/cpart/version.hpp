#pragma once

namespace cpart {

inline constexpr const char* kVersion = "cpart 0.1.0";

}  // namespace cpart
