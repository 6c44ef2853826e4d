#pragma once

#include <string>

namespace eesng {

// Shortest decimal form that round-trips, independent of locale. Output
// files use it so reruns are byte-identical.
std::string format_double(double value);

}  // namespace eesng
