#pragma once

namespace gridloc {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace gridloc
