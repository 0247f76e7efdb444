#pragma once

#include <stdexcept>
#include <string>

namespace twinloop {

/// Non-finite or out-of-domain numeric argument.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Offloading target outside {0, ..., N}.
class ActionError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Tensor or architecture mismatch.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Malformed, truncated or version-mismatched serialised data.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration. `path()` names the offending key, e.g.
/// `scenario.phases[1].task_type_weights`.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace twinloop
