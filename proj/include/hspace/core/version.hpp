#pragma once

namespace hspace {

inline constexpr const char* kToolkitVersion = "0.1.0";

}  // namespace hspace
