#pragma once

#include <string>

namespace vidsum {

// Shortest decimal form that round-trips the exact double; locale-free.
std::string format_double(double v);

}  // namespace vidsum
