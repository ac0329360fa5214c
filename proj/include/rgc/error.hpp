#pragma once

#include <stdexcept>
#include <string>

namespace rgc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments, configs, or inputs that violate a documented precondition.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded (unknown format, bad header, bad label values).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (missing file, unwritable path).
class IoError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed after its inputs validated. `stage()` names it.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

}  // namespace rgc
