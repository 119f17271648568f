#pragma once

#include <stdexcept>
#include <string>

namespace lpref {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values, negative radicands, overflow. CLI exit code 3.
class NumericFault : public Error {
 public:
  using Error::Error;
};

// Inputs below a numeric floor (norms, standard deviations, alpha_bar).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

// Violated preconditions: bad shapes, ranges, indices, flags.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Training loss blew past the divergence guard.
class Divergence : public Error {
 public:
  using Error::Error;
};

// File and format problems.
class IoError : public Error {
 public:
  using Error::Error;
};

// Norms and standard deviations below this floor are errors, not clamps,
// unless an operation documents a clamp.
inline constexpr double kNumericFloor = 1e-12;

}  // namespace lpref
