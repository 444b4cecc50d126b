#pragma once

namespace greedyshift {
inline constexpr const char* kLibraryVersion = "0.1.0";
}
