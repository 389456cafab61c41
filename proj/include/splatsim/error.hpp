#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace splatsim {

// Base for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad syntax, out-of-range index, non-finite value).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Input file is well-formed but lacks a required field.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// Caller passed arguments that violate an operation's precondition.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Non-finite state produced during integration.
class SimulationFault : public Error {
 public:
  SimulationFault(const std::string& what, std::size_t substep)
      : Error(what + " (substep " + std::to_string(substep) + ")"),
        substep_(substep) {}

  std::size_t substep() const { return substep_; }

 private:
  std::size_t substep_;
};

// Episode could not start: an object overlaps a static collider or the
// ground at its initial pose.
class ResetFault : public Error {
 public:
  using Error::Error;
};

// Numerical procedure could not produce an answer (rank deficiency, no
// consensus, all candidates faulted).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace splatsim
