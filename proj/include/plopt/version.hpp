#pragma once

namespace plopt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace plopt
