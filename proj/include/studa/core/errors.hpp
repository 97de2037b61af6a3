#pragma once

#include <stdexcept>
#include <string>

namespace studa {

// Base of every error raised by the toolkit. CLI maps these to exit code 2,
// except UsageError which maps to 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("configuration error: " + what) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& what) : Error("usage error: " + what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape mismatch: " + what) {}
};

class DatasetIntegrityError : public Error {
 public:
  explicit DatasetIntegrityError(const std::string& what) : Error("dataset integrity error: " + what) {}
};

class NumericalError : public Error {
 public:
  NumericalError(const std::string& loss_name, const std::string& what)
      : Error("numerical failure in '" + loss_name + "': " + what), loss_name_(loss_name) {}
  const std::string& loss_name() const noexcept { return loss_name_; }

 private:
  std::string loss_name_;
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& what) : Error("checkpoint error: " + what) {}
};

class CorruptionError : public CheckpointError {
 public:
  explicit CorruptionError(const std::string& what) : CheckpointError("corrupt: " + what) {}
};

class VersionError : public CheckpointError {
 public:
  explicit VersionError(const std::string& what) : CheckpointError("version: " + what) {}
};

class PrerequisiteError : public Error {
 public:
  explicit PrerequisiteError(const std::string& what) : Error("missing prerequisite: " + what) {}
};

// Raised when a training stage tries to read withheld target-train labels.
class LeakError : public Error {
 public:
  explicit LeakError(const std::string& what) : Error("label leak: " + what) {}
};

}  // namespace studa
