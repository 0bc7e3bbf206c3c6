#pragma once

#include <stdexcept>
#include <string>

namespace smartvr {

// Every failure raised by the library derives from Error so callers can map
// categories onto exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a structural rule of the data model.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

class LookupError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Operation invoked in the wrong lifecycle state (e.g. backward before forward).
class StateError : public Error {
 public:
  using Error::Error;
};

// Sample lacks inputs the model requires (e.g. features for a state branch).
class InputError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Dataset does not support the evaluation protocol (e.g. no pretest records).
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DegenerateLabelsError : public Error {
 public:
  using Error::Error;
};

// File system or parse failure; message carries file[:line] context.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace smartvr
