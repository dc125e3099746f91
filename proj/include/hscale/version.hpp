#pragma once

namespace hscale {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace hscale
