#pragma once

namespace specwin {

inline constexpr const char* kToolkitName = "specwin";
inline constexpr const char* kToolkitVersion = "0.1.0";

} // namespace specwin
