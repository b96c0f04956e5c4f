#pragma once

#include <stdexcept>
#include <string>

namespace langsurf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite, out-of-range or otherwise unusable argument.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (header, dtype, element count, payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Two arrays that must agree in shape do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A key (query token, config key) is not known.
class LookupError : public Error {
 public:
  using Error::Error;
};

/// A query selected nothing; the caller's input is left untouched.
class NoMatchError : public Error {
 public:
  using Error::Error;
};

/// Gradient or loss became non-finite during optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// The point set spans fewer than three dimensions.
class DegenerateHullError : public Error {
 public:
  DegenerateHullError(const std::string& what, int affine_rank)
      : Error(what), affine_rank_(affine_rank) {}
  int affine_rank() const noexcept { return affine_rank_; }

 private:
  int affine_rank_;
};

}  // namespace langsurf
