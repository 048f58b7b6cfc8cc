#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace mixaudit {

// Reals in every exported file carry 12 significant digits.
inline std::string format_real(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  return buf;
}

// Value rounded to 12 significant digits, so JSON emitters print it losslessly.
inline double round_real(double value) {
  if (!std::isfinite(value)) return value;
  return std::stod(format_real(value));
}

}  // namespace mixaudit
