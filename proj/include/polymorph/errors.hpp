#ifndef POLYMORPH_ERRORS_HPP_
#define POLYMORPH_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace polymorph {

// Dimension or layout mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation called in the wrong state (e.g. backward without a forward tape).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or infinity showed up where finite values are required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation not supported by the selected critic architecture.
class UnsupportedArchitecture : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// The simulator was driven into an invalid state (non-finite actions etc.).
class EnvironmentFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The actor produced non-finite outputs; training must stop.
class PolicyDivergence : public NumericError {
 public:
  using NumericError::NumericError;
};

}  // namespace polymorph

#endif  // POLYMORPH_ERRORS_HPP_
