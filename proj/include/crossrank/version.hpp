#pragma once

namespace crossrank {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace crossrank
