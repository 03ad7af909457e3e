#pragma once

#include <stdexcept>
#include <string>

namespace bayesnf {

// Process exit codes used by the command-line tool.
enum class ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kStateError = 3,
  kNumericalError = 4,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& what, ExitCode code) : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Malformed input: bad file, bad config value, violated precondition.
class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error(what, ExitCode::kInputError) {}
};

/// Inconsistent state: checkpoint does not match the config, missing checkpoint.
class StateError : public Error {
 public:
  explicit StateError(const std::string& what) : Error(what, ExitCode::kStateError) {}
};

/// Non-finite values during evaluation or training.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumericalError) {}
};

}  // namespace bayesnf
