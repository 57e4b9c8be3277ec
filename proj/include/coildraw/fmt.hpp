#pragma once

#include <charconv>
#include <stdexcept>
#include <string>

namespace coildraw {

/// Shortest decimal string that round-trips the exact double value.
/// Used everywhere a float reaches a file, so output is byte-reproducible.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  if (res.ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, res.ptr);
}

}  // namespace coildraw
