#pragma once

#include <stdexcept>
#include <string>

namespace aqualoc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An argument is outside the physical or protocol range it models.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Connectivity or realizability requirement of a graph is not met.
class GraphError : public Error {
 public:
  using Error::Error;
};

/// Leader and pointed device coincide in the horizontal plane.
class DegenerateGeometry : public Error {
 public:
  using Error::Error;
};

/// No tap pair satisfies the dual-microphone direct-path constraints.
class NoDirectPath : public Error {
 public:
  using Error::Error;
};

/// Two packets overlapped at a receiver during a simulated round.
class ProtocolViolation : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace aqualoc
