#pragma once

namespace traplab {

inline constexpr const char* kVersion = "traplab 0.1.0";

}  // namespace traplab
