#pragma once

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>
#include <string>

namespace encore {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape/dimension mismatches and malformed graphs.
struct ShapeError : Error {
  using Error::Error;
};

/// Bad or missing input data (files, corpora, datasets, configs).
struct DataError : Error {
  using Error::Error;
};

/// Numerical failures: NaN losses, degenerate vectors, fully masked rows.
struct NumericError : Error {
  using Error::Error;
};

/// Command-line / configuration misuse.
struct UsageError : Error {
  using Error::Error;
};

namespace detail {
inline void format_into(std::ostringstream&) {}

template <class T, class... Rest>
void format_into(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  format_into(os, rest...);
}
}  // namespace detail

template <class... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

template <class E = Error, class... Args>
[[noreturn]] void fail(const Args&... args) {
  throw E(strcat(args...));
}

template <class E = Error, class... Args>
void check(bool cond, const Args&... args) {
  if (!cond) fail<E>(args...);
}

/// Shortest decimal representation that parses back to exactly `v`.
inline std::string fmt_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) return buf;
  }
  return buf;
}

inline std::string fmt_float(float v) {
  char buf[48];
  for (int prec = 1; prec <= 9; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, static_cast<double>(v));
    if (std::strtof(buf, nullptr) == v) return buf;
  }
  return buf;
}

}  // namespace encore
