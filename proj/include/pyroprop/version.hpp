#pragma once

namespace pyroprop {

inline constexpr const char* kToolVersion = "pyroprop 0.1.0";

} // namespace pyroprop
