#pragma once

namespace sphereflow {

inline constexpr const char* version() { return "0.1.0"; }

} // namespace sphereflow
