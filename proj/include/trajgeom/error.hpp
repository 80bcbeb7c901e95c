#pragma once

#include <stdexcept>
#include <string>

namespace trajgeom {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments to a numeric routine (too few points, zero variance, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A generator could not satisfy its constraints within the retry budget.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (pool, word list, config, suite document).
class ParseError : public Error {
 public:
  using Error::Error;
};

}  // namespace trajgeom
