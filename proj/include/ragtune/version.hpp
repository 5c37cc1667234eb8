#pragma once

namespace ragtune {
inline constexpr const char* kVersion = "0.1.0";
}
