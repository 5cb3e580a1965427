#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>

namespace bigroc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad shapes, ranges, label counts or configuration values.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up where a finite value was required.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::ptrdiff_t index)
      : Error(what), index_(index) {}

  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

/// File and format problems (checkpoints, manifests, images).
class IoError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class T>
void require_finite(std::span<const T> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(static_cast<double>(values[i]))) {
      throw NonFiniteError(std::string(what) + ": non-finite value at index " +
                               std::to_string(i),
                           static_cast<std::ptrdiff_t>(i));
    }
  }
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgument(msg);
}

}  // namespace detail
}  // namespace bigroc
