#pragma once

#include <stdexcept>
#include <string>

namespace predsim {

/// Invalid or malformed configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke an operation's precondition (CLI exit code 3).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Sample window cannot support the requested fit (duplicate timestamps,
/// singular normal equations). Callers fall back to no prediction.
class DegenerateWindowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training loss stopped being finite.
class TrainingDivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace predsim
