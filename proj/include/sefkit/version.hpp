#pragma once

namespace sefkit {

inline constexpr const char* kVersion = "0.1.0";

}
