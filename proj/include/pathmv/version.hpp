#pragma once

namespace pathmv {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace pathmv
