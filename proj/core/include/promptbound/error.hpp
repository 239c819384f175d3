// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace promptbound {

/// Raised for out-of-domain inputs: bad bound parameters, malformed data.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The backend cannot perform the requested operation (e.g. no log-probabilities).
class UnsupportedCapability : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Transport-level failure that survived every retry.
class RetryableError : public std::runtime_error {
 public:
  RetryableError(const std::string& what, int attempts)
      : std::runtime_error(what + " (after " + std::to_string(attempts) + " attempts)"),
        attempts_(attempts) {}

  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

/// Non-retryable configuration problem, e.g. a missing credential.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace promptbound
