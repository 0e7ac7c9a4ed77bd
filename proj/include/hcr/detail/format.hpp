#pragma once

#include <cstdio>
#include <string>

namespace hcr {

/// Decimal text with 17 significant digits; parses back to the identical double.
inline std::string format_real(double x) {
  char buf[40];
  const int n = std::snprintf(buf, sizeof buf, "%.17g", x);
  return std::string(buf, static_cast<std::size_t>(n));
}

}  // namespace hcr
