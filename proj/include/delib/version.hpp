#pragma once

namespace delib {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace delib
