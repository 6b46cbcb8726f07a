#pragma once

#include <charconv>
#include <string>
#include <string_view>

#include "capconf/errors.hpp"

namespace capconf {

// Shortest decimal string that round-trips the binary double. Golden files
// stay stable across platforms because std::to_chars is exact.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("invalid number \"" + std::string(s) + "\"");
  }
  return v;
}

}  // namespace capconf
