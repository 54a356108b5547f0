#pragma once

namespace atbp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace atbp
