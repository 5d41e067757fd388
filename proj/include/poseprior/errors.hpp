#pragma once

#include <stdexcept>
#include <string>

namespace poseprior {

// Input and schema problems map to CLI exit code 2, numerical divergence to 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ArgumentError : Error {
  using Error::Error;
};

struct DefinitenessError : Error {
  using Error::Error;
};

struct BehindCameraError : Error {
  using Error::Error;
};

struct AlignmentError : Error {
  using Error::Error;
};

struct InsufficientSupportError : Error {
  using Error::Error;
};

struct FitFailureError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct SchemaError : Error {
  using Error::Error;
};

struct VersionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct ParseError : Error {
  ParseError(const std::string& what, long line_number)
      : Error(what + " (line " + std::to_string(line_number) + ")"), line(line_number) {}
  long line;
};

struct DivergenceError : Error {
  DivergenceError(const std::string& what, long step_index)
      : Error(what + " (step " + std::to_string(step_index) + ")"), step(step_index) {}
  long step;
};

}  // namespace poseprior
