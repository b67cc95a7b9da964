#pragma once

#include <stdexcept>
#include <string>

namespace maskprobe {

/// Precondition or invariant violation at an API boundary.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed or truncated file content.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Not enough data to estimate something (e.g. a density fit with no usable bins).
class InsufficientData : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violation of the detector wire protocol, including timeouts and peer exit.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A detector backend failed while the engine was driving it.
class DetectorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace maskprobe
