#pragma once

#include <stdexcept>
#include <string>

namespace gdod {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated: shape mismatch, non-finite data, out-of-range knob.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// A file does not follow the expected column layout.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// A cell holds a value outside its domain (e.g. a label that is not 0/1).
class ValueError : public Error {
 public:
  using Error::Error;
};

// Metric has no meaning on the given input (e.g. AUC with one class).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace gdod
