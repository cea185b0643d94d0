#pragma once

#include <stdexcept>
#include <string>

namespace tbqn {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape disagreement; message names both shapes.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Invalid user-facing configuration (bad field, bad range, bad file content).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Violated API precondition (missing grad, non-scalar loss, out-of-range action).
class ContractError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by the training loop when the loss or Q-values explode.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, long long step)
      : Error(msg), step(step) {}
  long long step;
};

}  // namespace tbqn
