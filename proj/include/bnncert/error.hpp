#pragma once

#include <stdexcept>
#include <string>

namespace bnncert {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent dimensions between networks, weights, boxes or specs.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input files (posterior, spec, sweep).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Argument outside its admissible domain (negative radius, bad depth, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// NaN/inf where a finite value is required, or training divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void throw_shape(const std::string& what) { throw ShapeError(what); }

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

inline void require_domain(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace detail
}  // namespace bnncert
