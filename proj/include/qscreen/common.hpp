#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qscreen {

// Logical tensor shape, row-major. Dims are kept as int: every axis in this
// project is far below 2^31 and signed arithmetic avoids underflow traps in
// size formulas like H - kH + 1.
using Shape = std::vector<int>;

// Error taxonomy. The CLI maps ConfigError to exit 2, everything else to 1.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int64_t numel(const Shape& dims) {
  int64_t n = 1;
  for (int d : dims) n *= d;
  return n;
}

inline std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << ',';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

template <class T>
bool all_finite(std::span<const T> v) {
  for (T x : v) {
    if (!std::isfinite(static_cast<double>(x))) return false;
  }
  return true;
}

template <class T>
void require_finite(std::span<const T> v, const char* what) {
  if (!all_finite(v)) {
    throw NumericError(std::string("non-finite values in ") + what);
  }
}

}  // namespace qscreen
