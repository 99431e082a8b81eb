#pragma once

#include <stdexcept>
#include <string>

namespace hep {

// Base for all toolkit errors. Callers that only care about failure catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

// Image I/O failures are split so callers can tell a missing file from a bad one.
class UnreadableFileError : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormatError : public Error {
 public:
  using Error::Error;
};

class CorruptFileError : public Error {
 public:
  using Error::Error;
};

class UnknownLayerError : public Error {
 public:
  using Error::Error;
};

class MissingWeightsError : public Error {
 public:
  using Error::Error;
};

class CheckpointMismatchError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace hep
